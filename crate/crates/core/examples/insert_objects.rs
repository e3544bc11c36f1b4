//! Insert vehicles into recorded views: ground-plan placement, projected
//! shadows, depth-tested pasting, and per-instance masks and 3D boxes.
//!
//! ```text
//! cargo run --release --example insert_objects -- [out_dir] [mesh.obj]
//! ```

use drivesim::composition::{
    build_ground_plan, compose_naive, sample_placement, save_composed, GroundConfig, Insertion,
    NaiveConfig, PlacementConfig, SemanticView, TriangleMesh,
};
use drivesim::harness::{generate_scene, SynthSpec, VEHICLE};

fn main() -> drivesim::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "inserted".into()));
    let mesh = match args.next() {
        Some(p) => TriangleMesh::load_obj(p.as_ref())?,
        None => TriangleMesh::vehicle(4.2, 1.8, 1.5, [0.1, 0.3, 0.75]),
    };
    let spec = SynthSpec {
        frames: 6,
        ..SynthSpec::default()
    };
    let (_, data) = generate_scene(&spec, 1)?;
    let depths: Vec<_> = data
        .views
        .iter()
        .flatten()
        .map(|v| v.depth.map(|d| if d.is_finite() { d } else { 1e4 }))
        .collect();
    let views: Vec<SemanticView<'_>> = data
        .views
        .iter()
        .flatten()
        .zip(&depths)
        .map(|(v, d)| SemanticView {
            labels: &v.labels,
            depth: d,
            camera: &v.camera,
        })
        .collect();
    let plan = build_ground_plan(&views, &GroundConfig::default());
    let (lo, hi) = mesh.aabb();
    let cfg = PlacementConfig {
        count: 3,
        footprint: [hi.x - lo.x, hi.y - lo.y],
        ..PlacementConfig::default()
    };
    let objects: Vec<Insertion> = sample_placement(&plan, &cfg, 5, None)?
        .into_iter()
        .map(|placement| Insertion {
            mesh: mesh.clone(),
            placement,
            class: VEHICLE,
        })
        .collect();
    for (i, (v, depth)) in data.views.iter().flatten().zip(&depths).enumerate() {
        let frame = compose_naive(
            &v.rgb,
            depth,
            &v.labels,
            &v.camera,
            &objects,
            &NaiveConfig::default(),
        )?;
        let visible: Vec<usize> = frame
            .instances
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .collect();
        save_composed(&out, &format!("view{i:02}"), &frame)?;
        println!("view {i:2}: visible pixels per object {visible:?}");
    }
    println!("wrote composites to {}", out.display());
    Ok(())
}
