use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use drivesim::composition::{
    build_ground_plan, compose_naive, ground_points, optimize_lighting, sample_placement,
    save_composed, EnvMap, Gaussian, GroundConfig, Insertion, LightingConfig, LightingProblem,
    NaiveConfig, Placement, PlacementConfig, SemanticView, TracePose, TriangleMesh, DEFAULT_LOBES,
};
use drivesim::confidence::{combine_confidence, CompletionConfig, DEFAULT_TAU};
use drivesim::geometry::{yaw_of, CameraModel, Rigid};
use drivesim::harness::io::{load_json, save_json, save_labels_png, save_png, save_raw};
use drivesim::harness::{
    dataset_view_confidence, generate_scene, load_dataset, psnr, ssim, write_dataset, Dataset,
    SeparationTally, SynthSpec, VEHICLE,
};
use drivesim::image::{Image, LabelMap};
use drivesim::training::{LoadedModel, TrainConfig, Trainer};
use drivesim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "drivesim",
    version,
    about = "Driving-scene reconstruction, rendering and object insertion"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Fix this for reproducible training.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (config: synthetic scene spec).
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset (config: training config).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Render every dataset camera pose, optionally perturbed.
    Render {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
        /// Perturb poses by up to ±[3, 3, 1] m, ±5° pitch and ±20° yaw.
        #[arg(long)]
        perturb: bool,
    },
    /// Confidence maps for every view with a successor frame.
    Confidence {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert meshes into every view (config: compose config).
    Compose {
        #[command(flatten)]
        model: OptionalModel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert a mesh into one view and fit environment lighting to a
    /// reference composite (config: relight config).
    Relight {
        #[command(flatten)]
        model: OptionalModel,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, default_value_t = 0)]
        cam: usize,
    },
    /// PSNR/SSIM of model renders against ground truth, as CSV.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct OptionalModel {
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint for backgrounds; ground truth views are used
    /// without it.
    #[arg(long)]
    model: Option<PathBuf>,
    /// OBJ mesh to insert; a procedural car without it.
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct ComposeConfig {
    ground: GroundConfig,
    placement: PlacementConfig,
    /// Sample near the dataset's tracked-box trajectories.
    use_traces: bool,
    light: [f64; 3],
    feather: bool,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            ground: GroundConfig::default(),
            placement: PlacementConfig {
                count: 3,
                ..PlacementConfig::default()
            },
            use_traces: false,
            light: [0.4, 0.3, -1.0],
            feather: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct RelightConfig {
    lighting: LightingConfig,
    /// Lighting that renders the reference composite.
    reference: EnvMap,
    lobes: usize,
    /// Distance of the inserted object along the camera's forward axis.
    distance: f64,
}

impl Default for RelightConfig {
    fn default() -> Self {
        Self {
            lighting: LightingConfig::default(),
            reference: EnvMap::new(vec![
                Gaussian {
                    p: [0.8, 0.9],
                    c: [1.0, 0.95, 0.85],
                    alpha: 3.0,
                    s: [0.25, 0.25],
                },
                Gaussian {
                    p: [0.0, 1.2],
                    c: [0.5, 0.6, 0.8],
                    alpha: 0.6,
                    s: [1.2, 0.8],
                },
            ]),
            lobes: DEFAULT_LOBES,
            distance: 9.0,
        }
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load_json)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn default_mesh() -> TriangleMesh {
    TriangleMesh::vehicle(4.2, 1.8, 1.5, [0.75, 0.12, 0.1])
}

fn load_mesh(path: Option<&Path>) -> Result<TriangleMesh> {
    path.map_or_else(|| Ok(default_mesh()), TriangleMesh::load_obj)
}

/// Background RGB, `z`-depth and labels for every `(frame, camera)`.
struct Background {
    frame: usize,
    cam: usize,
    camera: CameraModel,
    rgb: Image,
    depth: Image,
    labels: LabelMap,
}

fn backgrounds(data: &Dataset, model: Option<&Path>) -> Result<Vec<Background>> {
    let loaded = model.map(LoadedModel::load).transpose()?;
    let mut out = Vec::new();
    for (f, views) in data.views.iter().enumerate() {
        for (c, v) in views.iter().enumerate() {
            let bg = match &loaded {
                Some(m) => {
                    let r = m.render(&v.camera, data.times[f], Some(f * data.cameras() + c));
                    Background {
                        frame: f,
                        cam: c,
                        camera: v.camera.clone(),
                        rgb: r.rgb,
                        depth: r.depth,
                        labels: r.labels,
                    }
                }
                None => Background {
                    frame: f,
                    cam: c,
                    camera: v.camera.clone(),
                    rgb: v.rgb.clone(),
                    depth: v.depth.map(|d| if d.is_finite() { d } else { 1e4 }),
                    labels: v.labels.clone(),
                },
            };
            out.push(bg);
        }
    }
    Ok(out)
}

fn perturbed(cam: &CameraModel, rng: &mut ChaCha8Rng) -> CameraModel {
    let ds = [3.0, 3.0, 1.0].map(|r: f64| rng.gen_range(-r..=r));
    let pitch = rng.gen_range(-5f64..=5.0).to_radians();
    let yaw = rng.gen_range(-20f64..=20.0).to_radians();
    let mut out = cam.clone();
    let r_yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).into_inner();
    let r_pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), pitch).into_inner();
    out.pose = Rigid::new(
        r_yaw * cam.pose.rot * r_pitch,
        cam.pose.trans + Vector3::from(ds),
    );
    out
}

fn synth(cli: &Cli, out: &Path) -> Result<()> {
    let spec: SynthSpec = read_config(cli.config.as_deref())?;
    let (_, data) = generate_scene(&spec, cli.seed)?;
    let m = write_dataset(out, &data)?;
    println!(
        "wrote {} views and {} LiDAR sweeps to {}",
        m.views.len(),
        m.lidar.len(),
        out.display()
    );
    Ok(())
}

fn train(cli: &Cli, data: &Path, out: &Path, steps: Option<usize>) -> Result<()> {
    let mut cfg: TrainConfig = match cli.config.as_deref() {
        Some(p) => load_json(p)?,
        None => TrainConfig::toy(),
    };
    cfg.seed = cli.seed;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    let data = load_dataset(data)?;
    create_dir(out)?;
    let mut t = Trainer::new(cfg, &data)?;
    let every = t.config.log_every.max(1);
    let total = t.config.steps;
    let last = t.run(Some(out), |step, r| {
        if step % every == 0 || step == total {
            println!(
                "step {step}/{total}: loss {:.5} (rgb {:.5}, depth {:.5})",
                r.total, r.rgb, r.depth
            );
        }
    })?;
    println!(
        "final loss {:.5}; checkpoint {}",
        last.total,
        out.join("model.ckpt").display()
    );
    Ok(())
}

fn render(cli: &Cli, model: &ModelArgs, out: &Path, perturb: bool) -> Result<()> {
    let data = load_dataset(&model.data)?;
    let m = LoadedModel::load(&model.model)?;
    create_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut poses = Vec::new();
    for (f, views) in data.views.iter().enumerate() {
        for (c, v) in views.iter().enumerate() {
            let (cam, view) = if perturb {
                (perturbed(&v.camera, &mut rng), None)
            } else {
                (v.camera.clone(), Some(f * data.cameras() + c))
            };
            let r = m.render(&cam, data.times[f], view);
            let stem = format!("f{f:03}_c{c}");
            save_png(&out.join(format!("{stem}_rgb.png")), &r.rgb)?;
            save_raw(&out.join(format!("{stem}_depth.raw")), &r.depth)?;
            save_labels_png(&out.join(format!("{stem}_labels.png")), &r.labels)?;
            poses.push(serde_json::json!({ "view": stem, "camera": cam }));
        }
    }
    save_json(&out.join("cameras.json"), &poses)?;
    println!("rendered {} views to {}", poses.len(), out.display());
    Ok(())
}

fn confidence(data: &Path, out: &Path) -> Result<()> {
    let data = load_dataset(data)?;
    create_dir(out)?;
    let mut tally = SeparationTally::default();
    for f in 0..data.frames().saturating_sub(1) {
        for c in 0..data.cameras() {
            let (vc, sparse) =
                dataset_view_confidence(&data, c, f, &CompletionConfig::default(), DEFAULT_TAU)?;
            tally.add(&vc, &sparse);
            let stem = format!("f{f:03}_c{c}");
            save_png(
                &out.join(format!("{stem}_confidence.png")),
                &combine_confidence(&vc.pack),
            )?;
            for (name, map) in ["rgb", "ssim", "feat", "depth", "flow"]
                .iter()
                .zip(&vc.pack.maps)
            {
                save_png(&out.join(format!("{stem}_{name}.png")), map)?;
            }
        }
    }
    let r = tally.report();
    save_json(&out.join("separation.json"), &r)?;
    println!(
        "{} clean / {} outlier LiDAR pixels: mean confidence {:.3} / {:.3}, AUC {:.4}",
        r.clean, r.outliers, r.mean_clean, r.mean_outlier, r.auc
    );
    Ok(())
}

fn traces(data: &Dataset) -> Vec<TracePose> {
    data.boxes
        .iter()
        .flat_map(|b| b.keyframes.iter())
        .map(|k| TracePose {
            position: [k.trans.x, k.trans.y],
            yaw: yaw_of(&k.rot),
        })
        .collect()
}

fn compose(cli: &Cli, args: &OptionalModel, out: &Path) -> Result<()> {
    let cfg: ComposeConfig = read_config(cli.config.as_deref())?;
    let data = load_dataset(&args.data)?;
    let mesh = load_mesh(args.mesh.as_deref())?;
    let bgs = backgrounds(&data, args.model.as_deref())?;
    let views: Vec<SemanticView<'_>> = bgs
        .iter()
        .map(|b| SemanticView {
            labels: &b.labels,
            depth: &b.depth,
            camera: &b.camera,
        })
        .collect();
    let plan = build_ground_plan(
        &views,
        &GroundConfig {
            seed: cli.seed,
            ..cfg.ground.clone()
        },
    );
    let (lo, hi) = mesh.aabb();
    let placement_cfg = PlacementConfig {
        footprint: [hi.x - lo.x, hi.y - lo.y],
        ..cfg.placement.clone()
    };
    let tr = traces(&data);
    let placements = sample_placement(
        &plan,
        &placement_cfg,
        cli.seed,
        cfg.use_traces.then_some(&tr[..]),
    )?;
    let objects: Vec<Insertion> = placements
        .iter()
        .map(|p| Insertion {
            mesh: mesh.clone(),
            placement: *p,
            class: VEHICLE,
        })
        .collect();
    let naive = NaiveConfig {
        light: Vector3::from(cfg.light).normalize(),
        feather: cfg.feather,
        ..NaiveConfig::default()
    };
    create_dir(out)?;
    let frames: Vec<Result<String>> = {
        use rayon::prelude::*;
        bgs.par_iter()
            .map(|b| {
                let frame =
                    compose_naive(&b.rgb, &b.depth, &b.labels, &b.camera, &objects, &naive)?;
                let stem = format!("f{:03}_c{}", b.frame, b.cam);
                save_composed(out, &stem, &frame)?;
                Ok(stem)
            })
            .collect()
    };
    let stems = frames.into_iter().collect::<Result<Vec<_>>>()?;
    save_json(&out.join("placements.json"), &placements)?;
    println!(
        "placed {} objects on a {}x{} ground plan; wrote {} frames to {}",
        placements.len(),
        plan.width(),
        plan.height(),
        stems.len(),
        out.display()
    );
    Ok(())
}

fn relight(cli: &Cli, args: &OptionalModel, out: &Path, frame: usize, cam: usize) -> Result<()> {
    let cfg: RelightConfig = read_config(cli.config.as_deref())?;
    let data = load_dataset(&args.data)?;
    if frame >= data.frames() || cam >= data.cameras() {
        return Err(Error::Config(format!(
            "no view for frame {frame}, camera {cam}"
        )));
    }
    let bgs = backgrounds(&data, args.model.as_deref())?;
    let b = &bgs[frame * data.cameras() + cam];
    let mesh = load_mesh(args.mesh.as_deref())?;
    let pose = b.camera.refined_pose();
    let fwd = pose.rot * Vector3::z();
    let heading = Vector3::new(fwd.x, fwd.y, 0.0).normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let spot = pose.trans + heading * cfg.distance;
    let placement = Placement {
        position: Vector3::new(spot.x, spot.y, 0.0),
        yaw: heading.y.atan2(heading.x) + rng.gen_range(-1.0..1.0),
    };
    let world = mesh.transformed(&placement.pose());
    let ground = ground_points(&b.depth, &b.labels, &b.camera, &[drivesim::harness::GROUND]);
    let problem = LightingProblem::new(&b.rgb, &ground, &world, &b.camera, cfg.lighting.rays)?;
    let reference = problem.render(&cfg.reference, &EnvMap::default());
    let ls = EnvMap::random(cfg.lobes, 2.0, 0.4, cli.seed);
    let lc = EnvMap::random(cfg.lobes, 0.2, 0.4, cli.seed.wrapping_add(1));
    let fit = optimize_lighting(&problem, &ls, &lc, &reference, &cfg.lighting)?;
    let result = problem.render(&fit.ls, &fit.lc);
    create_dir(out)?;
    save_png(&out.join("reference.png"), &reference)?;
    save_png(&out.join("initial.png"), &problem.render(&ls, &lc))?;
    save_png(&out.join("relit.png"), &result)?;
    save_png(&out.join("mask.png"), problem.mask())?;
    save_json(
        &out.join("lighting.json"),
        &serde_json::json!({ "ls": fit.ls, "lc": fit.lc }),
    )?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in fit.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l:.9e}\n"));
    }
    std::fs::write(out.join("losses.csv"), csv).map_err(|e| Error::Io {
        path: out.join("losses.csv"),
        source: e,
    })?;
    println!(
        "loss {:.3e} -> {:.3e}; PSNR vs reference {:.2} dB",
        fit.losses.first().copied().unwrap_or(f64::NAN),
        fit.losses.last().copied().unwrap_or(f64::NAN),
        psnr(&result, &reference)?
    );
    Ok(())
}

fn eval(model: &ModelArgs, out: Option<&Path>) -> Result<()> {
    let data = load_dataset(&model.data)?;
    let m = LoadedModel::load(&model.model)?;
    let mut csv = String::from("frame,camera,holdout,psnr,ssim\n");
    for (f, views) in data.views.iter().enumerate() {
        for (c, v) in views.iter().enumerate() {
            let r = m.render(&v.camera, data.times[f], Some(f * data.cameras() + c));
            let holdout = m.config.holdout.contains(&(f, c));
            let p = psnr(&r.rgb, &v.rgb)?;
            let s = ssim(&r.rgb.to_gray(), &v.rgb.to_gray())?;
            csv.push_str(&format!("{f},{c},{holdout},{p:.4},{s:.5}\n"));
        }
    }
    match out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth { out } => synth(cli, out),
        Command::Train { data, out, steps } => train(cli, data, out, *steps),
        Command::Render {
            model,
            out,
            perturb,
        } => render(cli, model, out, *perturb),
        Command::Confidence { data, out } => confidence(data, out),
        Command::Compose { model, out } => compose(cli, model, out),
        Command::Relight {
            model,
            out,
            frame,
            cam,
        } => relight(cli, model, out, *frame, *cam),
        Command::Eval { model, out } => eval(model, out.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
