//! Briefly train on a generated scene, then render a recorded camera moved
//! sideways, raised and turned, next to the recorded pose.
//!
//! ```text
//! cargo run --release --example novel_views -- [steps] [out_dir]
//! ```

use drivesim::geometry::{rot_z, Rigid};
use drivesim::harness::io::save_png;
use drivesim::harness::{generate_scene, psnr, SynthSpec};
use drivesim::renderer::render_image;
use drivesim::training::{TrainConfig, Trainer};
use nalgebra::Vector3;

fn main() -> drivesim::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "novel_views".into()));
    let (scene, data) = generate_scene(&SynthSpec::default(), 0)?;
    let mut trainer = Trainer::new(
        TrainConfig {
            steps,
            ..TrainConfig::toy()
        },
        &data,
    )?;
    trainer.run(None, |_, _| {})?;
    let (frame, cam) = (10, 0);
    let base = &data.views[frame][cam].camera;
    let time = data.times[frame];
    let shifts = [
        ("recorded", 0.0, Vector3::zeros()),
        ("left_2m", 0.0, base.pose.rot * Vector3::new(-2.0, 0.0, 0.0)),
        ("raised_1m", 0.0, Vector3::new(0.0, 0.0, 1.0)),
        ("yaw_15deg", 15f64.to_radians(), Vector3::zeros()),
    ];
    for (name, yaw, dt) in shifts {
        let mut c = base.clone();
        c.pose = Rigid::new(rot_z(yaw) * base.pose.rot, base.pose.trans + dt);
        let r = render_image(&trainer.scene, trainer.tape.params(), &c, time);
        let truth = scene.render_view(&c, time, None);
        println!(
            "{name:>10}: PSNR against ground truth {:.2} dB",
            psnr(&r.rgb, &truth.rgb)?
        );
        save_png(&out.join(format!("{name}.png")), &r.rgb)?;
        save_png(&out.join(format!("{name}_gt.png")), &truth.rgb)?;
    }
    println!("wrote renders to {}", out.display());
    Ok(())
}
