pub mod composition;
pub mod confidence;
pub mod error;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod renderer;
pub mod training;

pub use error::{Error, Result};
