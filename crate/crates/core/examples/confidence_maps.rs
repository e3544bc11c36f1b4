//! LiDAR with injected outliers, completed to dense depth and scored by the
//! five confidence maps against the recorded outlier flags.
//!
//! ```text
//! cargo run --release --example confidence_maps -- [out_dir]
//! ```

use drivesim::confidence::{combine_confidence, CompletionConfig, DEFAULT_TAU};
use drivesim::harness::io::save_png;
use drivesim::harness::{
    scene_view_confidence, LidarSpec, SeparationTally, SynthSpec, SyntheticScene,
};

fn main() -> drivesim::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let spec = SynthSpec {
        width: 128,
        height: 96,
        frames: 8,
        outlier_rate: 0.1,
        texture_contrast: 1.0,
        lidar: LidarSpec {
            beams: 48,
            azimuth_step_deg: 0.5,
            ..LidarSpec::default()
        },
        ..SynthSpec::default()
    };
    let scene = SyntheticScene::new(spec.clone(), 7)?;
    let (source, target) = (6, 4);
    let mut all = SeparationTally::default();
    for cam in 0..spec.camera_yaws_deg.len() {
        let (vc, sparse) = scene_view_confidence(
            &scene,
            cam,
            source,
            target,
            &CompletionConfig::default(),
            DEFAULT_TAU,
        )?;
        let mut one = SeparationTally::default();
        one.add(&vc, &sparse);
        all.add(&vc, &sparse);
        let r = one.report();
        println!(
            "camera {cam}: {} clean / {} outlier pixels, mean confidence {:.3} / {:.3}, AUC {:.4}",
            r.clean, r.outliers, r.mean_clean, r.mean_outlier, r.auc
        );
        if let Some(dir) = &out {
            save_png(
                &dir.join(format!("cam{cam}_confidence.png")),
                &combine_confidence(&vc.pack),
            )?;
            for (name, map) in ["rgb", "ssim", "feat", "depth", "flow"]
                .iter()
                .zip(&vc.pack.maps)
            {
                save_png(&dir.join(format!("cam{cam}_{name}.png")), map)?;
            }
        }
    }
    let r = all.report();
    println!(
        "all cameras: mean confidence clean {:.3}, outliers {:.3}, AUC {:.4}",
        r.mean_clean, r.mean_outlier, r.auc
    );
    println!("per map (rgb, ssim, feat, depth, flow)");
    println!("  clean   {:.3?}", r.per_map_clean);
    println!("  outlier {:.3?}", r.per_map_outlier);
    Ok(())
}
