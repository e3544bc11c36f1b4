//! Trainable fields: grid encodings, decoders, contraction and the flat
//! parameter tape they live in.

pub mod checkpoint;
pub mod contract;
pub mod grid;
pub mod mlp;
pub mod radiance;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_atomic};
pub use contract::{contract, contract_with_jacobian, contraction_scale};
pub use grid::{downweight, GridConfig, GridEncoding};
pub use mlp::Mlp;
pub use radiance::{
    sigmoid, softplus, Domain, FieldConfig, FieldGrad, FieldOutput, FieldQuery, FieldRole,
    FieldScratch, RadianceField, MAX_CLASSES,
};
pub use tape::{GroupKind, Objective, ParamGroup, ParamTape};
