//! Recover environment lighting from a composite: render a reference with a
//! known sun lobe, then fit the shadow and object lighting maps from a
//! displaced initial guess.
//!
//! ```text
//! cargo run --release --example relight -- [out_dir]
//! ```

use drivesim::composition::{
    ground_points, optimize_lighting, EnvMap, Gaussian, LightingConfig, LightingProblem,
    TriangleMesh,
};
use drivesim::geometry::{CameraModel, Rigid};
use drivesim::harness::io::save_png;
use drivesim::harness::{look_rotation, GROUND};
use drivesim::image::{Image, LabelMap};
use nalgebra::{Rotation3, Vector3};

fn main() -> drivesim::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let n = 64;
    let rot =
        look_rotation(0.0) * Rotation3::from_axis_angle(&Vector3::x_axis(), -0.4).into_inner();
    let cam = CameraModel::with_fov(n, n, 1.0, Rigid::new(rot, Vector3::new(-7.0, 0.0, 3.0)));
    let mesh = TriangleMesh::vehicle(3.0, 1.6, 1.4, [0.7, 0.3, 0.2]);
    let depth = Image::from_fn(n, n, 1, |x, y, _| {
        let r = cam.ray(x as f64, y as f64, 0.0, 100.0);
        if r.dir.z < 0.0 {
            -r.origin.z / r.dir.z * cam.z_per_distance(x as f64, y as f64)
        } else {
            f64::INFINITY
        }
    });
    let bg = Image::from_fn(n, n, 3, |x, y, c| 0.3 + 0.02 * ((x + y + c) % 9) as f64);
    let ground = ground_points(&depth, &LabelMap::filled(n, n, GROUND), &cam, &[GROUND]);
    let cfg = LightingConfig {
        rays: 256,
        ..LightingConfig::default()
    };
    let problem = LightingProblem::new(&bg, &ground, &mesh, &cam, cfg.rays)?;
    let sun = |p, c, alpha, s| {
        EnvMap::new(vec![Gaussian {
            p,
            c,
            alpha,
            s: [s, s],
        }])
    };
    let truth = sun([0.9, 0.7], [1.0, 0.95, 0.9], 3.0, 0.3);
    let reference = problem.render(&truth, &EnvMap::default());
    let init = sun([0.3, 1.1], [0.8; 3], 2.0, 0.4);
    let fit = optimize_lighting(&problem, &init, &EnvMap::default(), &reference, &cfg)?;
    let angle = |m: &EnvMap| {
        let (a, b) = (
            m.dominant_direction().unwrap(),
            truth.dominant_direction().unwrap(),
        );
        a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
    };
    println!(
        "sun direction error: {:.2}° initially, {:.3}° after fitting",
        angle(&init),
        angle(&fit.ls)
    );
    println!(
        "loss {:.3e} -> {:.3e} over {} steps",
        fit.losses[0],
        fit.losses.last().unwrap(),
        fit.losses.len()
    );
    if let Some(dir) = out {
        save_png(&dir.join("reference.png"), &reference)?;
        save_png(
            &dir.join("initial.png"),
            &problem.render(&init, &EnvMap::default()),
        )?;
        save_png(&dir.join("fitted.png"), &problem.render(&fit.ls, &fit.lc))?;
    }
    Ok(())
}
