//! Train the composite radiance field on a generated scene and report
//! held-out view quality, overall and inside the vehicle silhouette.
//!
//! ```text
//! cargo run --release --example train_scene -- [steps] [out_dir]
//! ```

use drivesim::harness::io::save_png;
use drivesim::harness::{generate_scene, masked_psnr, psnr, ssim, SynthSpec, VEHICLE};
use drivesim::image::Mask;
use drivesim::training::{TrainConfig, Trainer};

fn main() -> drivesim::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = args.next().map(std::path::PathBuf::from);
    let (_, data) = generate_scene(&SynthSpec::default(), 0)?;
    let cfg = TrainConfig {
        steps,
        holdout: vec![(5, 0), (15, 1), (25, 2)],
        ..TrainConfig::toy()
    };
    let mut trainer = Trainer::new(cfg, &data)?;
    let start = std::time::Instant::now();
    trainer.run(out.as_deref(), |step, r| {
        if step % 250 == 0 {
            println!(
                "step {step:5}: rgb {:.5} depth {:.4} lidar {:.4}",
                r.rgb, r.depth, r.lidar
            );
        }
    })?;
    println!("{steps} steps in {:.1?}", start.elapsed());
    for &v in &trainer.holdout_views {
        let r = trainer.render_view(v);
        let t = &trainer.views[v];
        let car = Mask::from_fn(t.camera.width, t.camera.height, |x, y| {
            *t.labels.get(x, y) == VEHICLE
        });
        let boxed = if car.iter().any(|&b| b) {
            format!("{:.2} dB", masked_psnr(&r.rgb, &t.rgb, &car)?)
        } else {
            "n/a".into()
        };
        println!(
            "held-out frame {} camera {}: PSNR {:.2} dB, SSIM {:.3}, vehicle PSNR {boxed}",
            t.frame,
            t.cam,
            psnr(&r.rgb, &t.rgb)?,
            ssim(&r.rgb, &t.rgb)?
        );
        if let Some(dir) = &out {
            save_png(
                &dir.join(format!("holdout_f{}_c{}.png", t.frame, t.cam)),
                &r.rgb,
            )?;
        }
    }
    println!(
        "confidence weights (rgb, ssim, feat, depth, flow): {:.3?}",
        trainer.omega_weights()
    );
    Ok(())
}
