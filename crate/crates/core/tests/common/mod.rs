#![allow(dead_code)]

use drivesim::field::GroupKind;
use drivesim::harness::{generate_scene, Dataset, SynthSpec, VEHICLE};
use drivesim::renderer::SceneConfig;
use drivesim::training::{BatchLoss, BatchRay, LossWeights, PlanMode, TrainConfig, Trainer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn small_dataset(frames: usize, seed: u64) -> Dataset {
    let spec = SynthSpec {
        width: 32,
        height: 24,
        frames,
        camera_yaws_deg: vec![0.0, 60.0],
        supersample: 1,
        ..SynthSpec::default()
    };
    generate_scene(&spec, seed).unwrap().1
}

pub fn small_config() -> TrainConfig {
    let mut scene = SceneConfig::compact();
    scene.sampling.proposal_samples = vec![16, 12];
    scene.sampling.final_samples = 12;
    TrainConfig {
        steps: 10,
        batch_rays: 64,
        lidar_rays: 16,
        scene,
        log_every: 1,
        ..TrainConfig::default()
    }
}

#[derive(Debug)]
pub struct GroupCheck {
    pub kind: GroupKind,
    pub checked: usize,
    /// Candidates skipped because the one-sided differences disagree, i.e.
    /// the perturbation straddles a kink (cell boundary, `|·|`, ReLU).
    pub kinks: usize,
    pub worst: f64,
}

/// Gradients below this are dominated by round-off at `eps = 1e-5`.
const GRAD_FLOOR: f64 = 1e-7;
const KINK_RATIO: f64 = 1e-3;

/// Compare the analytic gradient of the full loss against central
/// differences at `eps`, on up to `per_group` random parameters with a
/// nonzero gradient in each group kind. Parameters of semantic heads are
/// checked against the full loss; all others against the loss without the
/// semantic term, whose gradient is stopped at the density.
pub fn gradient_check(
    trainer: &mut Trainer,
    per_group: usize,
    eps: f64,
    seed: u64,
) -> Vec<GroupCheck> {
    // Keep the finite-difference perturbation in the smooth regime.
    let mut cfg = trainer.config.clone();
    cfg.jitter = true;
    let weights = cfg.weights;
    let no_sem = LossWeights {
        semantic: 0.0,
        ..weights
    };
    let mut batch = trainer.sample_batch();
    // Aim a quarter of the patches at the vehicle so track offsets receive
    // gradient.
    let mut hits = Vec::new();
    for &v in &trainer.train_views {
        let view = &trainer.views[v];
        for y in 0..view.camera.height - 1 {
            for x in 0..view.camera.width - 1 {
                if *view.labels.get(x, y) == VEHICLE {
                    hits.push((v, x, y));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = batch.patches.len() / 4;
    for (p, &(view, x0, y0)) in batch
        .patches
        .iter_mut()
        .zip(hits.choose_multiple(&mut rng, n))
    {
        *p = [(0, 0), (1, 0), (0, 1), (1, 1)].map(|(dx, dy)| BatchRay {
            view,
            x: (x0 + dx) as f64,
            y: (y0 + dy) as f64,
            lidar: None,
        });
    }
    let loss = BatchLoss {
        scene: &trainer.scene,
        views: &trainer.views,
        layout: &trainer.layout,
        config: &cfg,
    };
    let mut params = trainer.tape.params().to_vec();
    let (_, plans) = loss.evaluate(
        &params,
        &batch,
        &weights,
        PlanMode::Fresh { step: 0 },
        None,
        true,
    );
    let mut grads = vec![0.0; params.len()];
    loss.evaluate(
        &params,
        &batch,
        &weights,
        PlanMode::Fixed(&plans),
        Some(&mut grads),
        false,
    );

    let kinds = [
        GroupKind::Grid,
        GroupKind::Mlp,
        GroupKind::Confidence,
        GroupKind::PoseOffset,
        GroupKind::TrackOffset,
    ];
    let groups = trainer.tape.groups().to_vec();
    let mut out = Vec::new();
    for kind in kinds {
        let mut candidates: Vec<(usize, bool)> = groups
            .iter()
            .filter(|g| g.kind == kind)
            .flat_map(|g| {
                let sem = g.name.contains(".semantic.");
                g.range()
                    .filter(|&i| grads[i].abs() > GRAD_FLOOR)
                    .map(move |i| (i, sem))
            })
            .collect();
        candidates.shuffle(&mut rng);
        let mut worst: f64 = 0.0;
        let (mut checked, mut kinks) = (0, 0);
        for &(i, sem) in &candidates {
            if checked == per_group {
                break;
            }
            let w = if sem { &weights } else { &no_sem };
            let orig = params[i];
            let (l0, _) = loss.evaluate(&params, &batch, w, PlanMode::Fixed(&plans), None, false);
            params[i] = orig + eps;
            let (lp, _) = loss.evaluate(&params, &batch, w, PlanMode::Fixed(&plans), None, false);
            params[i] = orig - eps;
            let (lm, _) = loss.evaluate(&params, &batch, w, PlanMode::Fixed(&plans), None, false);
            params[i] = orig;
            let fwd = (lp.total - l0.total) / eps;
            let bwd = (l0.total - lm.total) / eps;
            if (fwd - bwd).abs() > KINK_RATIO * fwd.abs().max(bwd.abs()) {
                kinks += 1;
                continue;
            }
            checked += 1;
            let fd = (lp.total - lm.total) / (2.0 * eps);
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs());
            if std::env::var("FD_VERBOSE").is_ok() {
                eprintln!(
                    "{kind:?} {i} sem={sem} fd={fd:.6e} an={:.6e} rel={rel:.2e}",
                    grads[i]
                );
            }
            worst = worst.max(rel);
        }
        out.push(GroupCheck {
            kind,
            checked,
            kinks,
            worst,
        });
    }
    out
}
