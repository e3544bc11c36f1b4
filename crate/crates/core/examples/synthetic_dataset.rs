//! Generate a small driving scene with a moving vehicle and write it as a
//! dataset directory.
//!
//! ```text
//! cargo run --release --example synthetic_dataset -- [out_dir]
//! ```

use drivesim::harness::{generate_scene, write_dataset, SynthSpec, CLASS_NAMES};

fn main() -> drivesim::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic".into());
    let spec = SynthSpec {
        frames: 12,
        ..SynthSpec::default()
    };
    let (_, data) = generate_scene(&spec, 3)?;
    let mut counts = vec![0usize; CLASS_NAMES.len()];
    for v in data.views.iter().flatten() {
        for &l in v.labels.iter() {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    for (name, c) in CLASS_NAMES.iter().zip(&counts) {
        println!(
            "{name:>10}: {:5.1}%",
            100.0 * *c as f64 / total.max(1) as f64
        );
    }
    let points: usize = data.lidar.iter().map(|l| l.points.len()).sum();
    println!(
        "{} frames x {} cameras, {points} LiDAR points, {} tracked boxes",
        data.frames(),
        data.cameras(),
        data.boxes.len()
    );
    let m = write_dataset(std::path::Path::new(&out), &data)?;
    println!(
        "wrote {} views to {out}",
        m.views.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}
