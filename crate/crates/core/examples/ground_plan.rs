//! Fuse labeled depth from every view of a generated scene into a
//! bird's-eye ground plan and sample non-overlapping vehicle placements.
//!
//! ```text
//! cargo run --release --example ground_plan -- [out_png]
//! ```

use drivesim::composition::{
    build_ground_plan, sample_placement, GroundConfig, PlacementConfig, SemanticView, UNKNOWN,
};
use drivesim::harness::io::save_png;
use drivesim::harness::{generate_scene, SynthSpec, CLASS_NAMES};
use drivesim::image::Image;

fn main() -> drivesim::Result<()> {
    let out = std::env::args().nth(1);
    let (_, data) = generate_scene(&SynthSpec::default(), 0)?;
    let views: Vec<SemanticView<'_>> = data
        .views
        .iter()
        .flatten()
        .map(|v| SemanticView {
            labels: &v.labels,
            depth: &v.depth,
            camera: &v.camera,
        })
        .collect();
    let plan = build_ground_plan(&views, &GroundConfig::default());
    println!(
        "plan {}x{} cells of {} m",
        plan.width(),
        plan.height(),
        plan.cell
    );
    for (id, name) in CLASS_NAMES.iter().enumerate() {
        println!("{name:>10}: {} cells", plan.cells_with(&[id as u16]).len());
    }
    let cfg = PlacementConfig {
        count: 4,
        ..PlacementConfig::default()
    };
    for seed in 0..3 {
        let p = sample_placement(&plan, &cfg, seed, None)?;
        let s: Vec<String> = p
            .iter()
            .map(|q| {
                format!(
                    "({:.1}, {:.1}) yaw {:.0}°",
                    q.position.x,
                    q.position.y,
                    q.yaw.to_degrees()
                )
            })
            .collect();
        println!("seed {seed}: {}", s.join(", "));
    }
    if let Some(path) = out {
        let shade = [0.5, 0.8, 0.3, 0.9, 0.0];
        let img = Image::from_fn(plan.width(), plan.height(), 1, |x, y, _| {
            let l = *plan.labels.get(x, plan.height() - 1 - y);
            if l == UNKNOWN {
                0.0
            } else {
                shade.get(l as usize).copied().unwrap_or(1.0)
            }
        });
        save_png(std::path::Path::new(&path), &img)?;
    }
    Ok(())
}
