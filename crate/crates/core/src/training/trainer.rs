//! Batched loss evaluation, deterministic gradient reduction and the
//! optimization loop.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{sample_batch, BatchRay, TrainBatch};
use super::config::{LossWeights, TrainConfig};
use super::data::{build_targets, ViewTargets};
use super::losses::{
    color_l1, cross_entropy, distortion, proposal_bound, smoothness_patch, weighted_l1,
};
use super::optimizer::Adam;
use crate::confidence::{softmax, N_MAPS};
use crate::error::{Error, Result};
use crate::field::{
    load_checkpoint, save_checkpoint, write_atomic, GroupKind, ParamTape, MAX_CLASSES,
};
use crate::geometry::{CameraModel, TrackedBox};
use crate::harness::Dataset;
use crate::renderer::{
    render_image, RayGrad, RayPlan, RayTrace, RenderedFrame, SceneModel, TraceMode,
};

/// Per-term batch means (unweighted) and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub rgb: f64,
    pub depth: f64,
    pub lidar: f64,
    pub semantic: f64,
    pub distortion: f64,
    pub proposal: f64,
    pub smoothness: f64,
}

impl LossReport {
    fn add(&mut self, o: &LossReport) {
        self.rgb += o.rgb;
        self.depth += o.depth;
        self.lidar += o.lidar;
        self.semantic += o.semantic;
        self.distortion += o.distortion;
        self.proposal += o.proposal;
        self.smoothness += o.smoothness;
    }

    fn finish(&mut self, w: &LossWeights) {
        self.total = self.rgb
            + w.depth * self.depth
            + w.lidar * self.lidar
            + w.semantic * self.semantic
            + w.distortion * self.distortion
            + w.proposal * self.proposal
            + w.smoothness * self.smoothness;
    }

    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.rgb,
            self.depth,
            self.lidar,
            self.semantic,
            self.distortion,
            self.proposal,
            self.smoothness,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Where the non-field parameters live in the tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    /// Start of the five confidence blend logits.
    pub omega: usize,
    /// Start of each view's `[ω_x, ω_y, ω_z, t_x, t_y, t_z]` pose offset.
    pub pose: Vec<usize>,
}

/// Build the scene and register confidence logits and per-view pose
/// offsets. Deterministic in `config.seed`.
pub fn build_model(
    config: &TrainConfig,
    boxes: &[TrackedBox],
    n_views: usize,
) -> (SceneModel, ParamTape, ModelLayout) {
    let mut tape = ParamTape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scene = SceneModel::new(config.scene.clone(), boxes.to_vec(), &mut tape, &mut rng);
    let omega = tape.alloc("omega", GroupKind::Confidence, vec![0.0; N_MAPS]);
    let pose = (0..n_views)
        .map(|v| tape.alloc(format!("pose{v}"), GroupKind::PoseOffset, vec![0.0; 6]))
        .collect();
    (scene, tape, ModelLayout { omega, pose })
}

/// Copy of `base` with the refinement offsets stored at `offset`.
pub fn refined_camera(base: &CameraModel, params: &[f64], offset: usize) -> CameraModel {
    let p = &params[offset..offset + 6];
    let mut cam = base.clone();
    cam.refine_rot = Vector3::new(p[0], p[1], p[2]);
    cam.refine_trans = Vector3::new(p[3], p[4], p[5]);
    cam
}

/// Scene center used for background normalisation: mean camera position.
pub fn resolve_config(mut config: TrainConfig, data: &Dataset) -> TrainConfig {
    let mut c = Vector3::zeros();
    let mut n = 0.0;
    for v in data.views.iter().flatten() {
        c += v.camera.pose.trans;
        n += 1.0;
    }
    if n > 0.0 {
        config.scene.center = c / n;
    }
    config
}

pub enum PlanMode<'a> {
    /// Fresh sampling; jitter streams are keyed by `(seed, step, ray)`.
    Fresh { step: usize },
    /// Replay recorded plans, one per ray in batch order.
    Fixed(&'a [RayPlan]),
}

/// Read-only view of everything the batch loss needs.
pub struct BatchLoss<'a> {
    pub scene: &'a SceneModel,
    pub views: &'a [ViewTargets],
    pub layout: &'a ModelLayout,
    pub config: &'a TrainConfig,
}

struct Norms {
    rays: f64,
    lidar: f64,
    patches: f64,
}

impl BatchLoss<'_> {
    fn ray_rng(&self, step: usize, idx: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        r.set_stream(idx as u64);
        r
    }

    /// Loss and, if `grads` is given, its gradient accumulated into `grads`.
    /// Work is split into one contiguous chunk per worker thread and the
    /// chunk gradients are summed in chunk order.
    pub fn evaluate(
        &self,
        params: &[f64],
        batch: &TrainBatch,
        weights: &LossWeights,
        mode: PlanMode<'_>,
        grads: Option<&mut [f64]>,
        record: bool,
    ) -> (LossReport, Vec<RayPlan>) {
        let cams: Vec<CameraModel> = self
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| refined_camera(&v.camera, params, self.layout.pose[i]))
            .collect();
        let norms = Norms {
            rays: batch.len().max(1) as f64,
            lidar: batch.lidar.len().max(1) as f64,
            patches: batch.patches.len().max(1) as f64,
        };
        let units = batch.patches.len() + batch.lidar.len();
        let chunks = rayon::current_num_threads().clamp(1, units.max(1));
        let bounds: Vec<Range<usize>> = (0..chunks)
            .map(|c| c * units / chunks..(c + 1) * units / chunks)
            .collect();
        let mut grads = grads;
        let mut locals: Vec<Vec<f64>> = match grads {
            Some(_) => (1..chunks).map(|_| vec![0.0; params.len()]).collect(),
            None => Vec::new(),
        };
        let mut bufs: Vec<Option<&mut [f64]>> = Vec::with_capacity(chunks);
        match grads.as_deref_mut() {
            Some(out) => {
                bufs.push(Some(out));
                bufs.extend(locals.iter_mut().map(|l| Some(&mut l[..])));
            }
            None => bufs.extend((0..chunks).map(|_| None)),
        }
        let results: Vec<(LossReport, Vec<RayPlan>)> = bounds
            .into_par_iter()
            .zip(bufs.into_par_iter())
            .map(|(range, buf)| {
                self.eval_chunk(
                    params, &cams, batch, range, weights, &mode, &norms, buf, record,
                )
            })
            .collect();
        if let Some(out) = grads {
            for local in &locals {
                for (o, l) in out.iter_mut().zip(local) {
                    *o += l;
                }
            }
        }
        let mut report = LossReport::default();
        let mut plans = Vec::new();
        for (rep, p) in results {
            report.add(&rep);
            plans.extend(p);
        }
        report.finish(weights);
        (report, plans)
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_chunk(
        &self,
        params: &[f64],
        cams: &[CameraModel],
        batch: &TrainBatch,
        units: Range<usize>,
        weights: &LossWeights,
        mode: &PlanMode<'_>,
        norms: &Norms,
        mut grads: Option<&mut [f64]>,
        record: bool,
    ) -> (LossReport, Vec<RayPlan>) {
        let mut rep = LossReport::default();
        let mut plans = Vec::new();
        let mut scratch = self.scene.scratch();
        let omega: [f64; N_MAPS] = params[self.layout.omega..self.layout.omega + N_MAPS]
            .try_into()
            .unwrap();
        let s = softmax(&omega);
        let mut d_omega = [0.0; N_MAPS];
        let n_patch = batch.patches.len();
        for u in units {
            let (rays, first): (&[BatchRay], usize) = if u < n_patch {
                (&batch.patches[u][..], 4 * u)
            } else {
                (
                    std::slice::from_ref(&batch.lidar[u - n_patch]),
                    4 * n_patch + u - n_patch,
                )
            };
            let mut traced: Vec<(RayTrace, RayGrad)> = Vec::with_capacity(rays.len());
            for (k, r) in rays.iter().enumerate() {
                let idx = first + k;
                let cam = &cams[r.view];
                let ray = cam.ray(r.x, r.y, self.scene.config.near, self.scene.config.far);
                let view = &self.views[r.view];
                let tr = match mode {
                    PlanMode::Fresh { step } if self.config.jitter => {
                        let mut rng = self.ray_rng(*step, idx);
                        self.scene.trace(
                            params,
                            &ray,
                            view.time,
                            TraceMode::Fresh {
                                jitter: Some(&mut rng),
                            },
                            &mut scratch,
                        )
                    }
                    PlanMode::Fresh { .. } => self.scene.trace(
                        params,
                        &ray,
                        view.time,
                        TraceMode::Fresh { jitter: None },
                        &mut scratch,
                    ),
                    PlanMode::Fixed(p) => self.scene.trace(
                        params,
                        &ray,
                        view.time,
                        TraceMode::Fixed(&p[idx]),
                        &mut scratch,
                    ),
                };
                let g = self.ray_losses(&tr, r, weights, norms, &s, &mut d_omega, &mut rep);
                traced.push((tr, g));
            }
            if rays.len() == 4 {
                let v = &self.views[rays[0].view];
                let disp: [f64; 4] = std::array::from_fn(|k| traced[k].0.output.disparity);
                let gray: [f64; 4] = std::array::from_fn(|k| {
                    let (x, y) = rays[k].pixel();
                    v.gray.at(x, y, 0)
                });
                let mut d = [0.0; 4];
                rep.smoothness += smoothness_patch(&disp, &gray, &mut d) / norms.patches;
                for k in 0..4 {
                    traced[k].1.disparity += weights.smoothness * d[k] / norms.patches;
                }
            }
            if let Some(gr) = grads.as_deref_mut() {
                for ((tr, g), r) in traced.iter().zip(rays) {
                    let (d_o, d_d) = self.scene.backward(params, tr, g, gr, &mut scratch);
                    let (d_rot, d_trans) =
                        cams[r.view].ray_offset_gradient(&tr.ray.dir, &d_o, &d_d);
                    let o = self.layout.pose[r.view];
                    for i in 0..3 {
                        gr[o + i] += d_rot[i];
                        gr[o + 3 + i] += d_trans[i];
                    }
                }
            }
            if record {
                plans.extend(traced.iter().map(|(tr, _)| tr.plan()));
            }
        }
        if let Some(gr) = grads {
            for j in 0..N_MAPS {
                gr[self.layout.omega + j] += d_omega[j];
            }
        }
        (rep, plans)
    }

    /// Per-ray supervision and ray-local regularizers; returns upstream
    /// gradients scaled by their loss weights.
    #[allow(clippy::too_many_arguments)]
    fn ray_losses(
        &self,
        tr: &RayTrace,
        r: &BatchRay,
        w: &LossWeights,
        norms: &Norms,
        s: &[f64],
        d_omega: &mut [f64; N_MAPS],
        rep: &mut LossReport,
    ) -> RayGrad {
        let view = &self.views[r.view];
        let out = &tr.output;
        let (px, py) = r.pixel();
        let mut g = RayGrad::default();
        let n = norms.rays;

        let target = if r.lidar.is_some() {
            let mut c = [0.0; 3];
            view.rgb.sample_bilinear(r.x, r.y, &mut c);
            c
        } else {
            view.rgb.rgb(px, py)
        };
        let (v, gc) = color_l1(&out.color, &target);
        rep.rgb += v / n;
        for c in 0..3 {
            g.color[c] = gc[c] / n;
        }

        let maps = if self.config.use_confidence {
            view.confidence_at(px, py)
        } else {
            None
        };
        let chat = maps.map_or(1.0, |m| (0..N_MAPS).map(|j| s[j] * m[j]).sum());
        let err = out.disparity - view.disparity.at(px, py, 0);
        let (v, gd) = weighted_l1(out.disparity, view.disparity.at(px, py, 0), chat);
        rep.depth += v / n;
        g.disparity += w.depth * gd / n;
        if let Some(m) = maps {
            let d_chat = w.depth * err.abs() / n;
            for j in 0..N_MAPS {
                d_omega[j] += d_chat * s[j] * (m[j] - chat);
            }
        }

        if let Some(dl) = r.lidar {
            let (v, gd) = weighted_l1(out.disparity, dl, 1.0);
            rep.lidar += v / norms.lidar;
            g.disparity += w.lidar * gd / norms.lidar;
        }

        let k = self.scene.config.classes;
        let label = (*view.labels.get(px, py) as usize).min(k - 1);
        let mut gs = [0.0; MAX_CLASSES];
        rep.semantic += cross_entropy(&out.semantics[..k], label, &mut gs[..k]) / n;
        for c in 0..k {
            g.semantics[c] = w.semantic * gs[c] / n;
        }

        let edges: Vec<f64> = tr.fine.samples.edges_s.iter().map(|e| 0.5 * e).collect();
        let mut dw = vec![0.0; tr.fine.weights.len()];
        rep.distortion += distortion(&edges, &tr.fine.weights, &mut dw) / n;
        dw.iter_mut().for_each(|d| *d *= w.distortion / n);
        g.fine_weights = dw;

        g.proposal_weights = tr
            .proposals
            .iter()
            .map(|st| {
                let mut dw = vec![0.0; st.weights.len()];
                rep.proposal += proposal_bound(&st.weights, &st.target, &mut dw) / n;
                dw.iter_mut().for_each(|d| *d *= w.proposal / n);
                dw
            })
            .collect();
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub lr_scale: f64,
    pub loss: LossReport,
    pub omega: [f64; N_MAPS],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    step: usize,
    config: TrainConfig,
    boxes: Vec<TrackedBox>,
    views: usize,
    layout: ModelLayout,
}

const CHECKPOINT_FORMAT: &str = "drivesim-model";

pub struct Trainer {
    pub config: TrainConfig,
    pub scene: SceneModel,
    pub tape: ParamTape,
    pub layout: ModelLayout,
    pub views: Vec<ViewTargets>,
    pub train_views: Vec<usize>,
    pub holdout_views: Vec<usize>,
    pub step: usize,
    pub log: Vec<LogRow>,
    boxes: Vec<TrackedBox>,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        let config = resolve_config(config, data);
        let views = build_targets(data, &config)?;
        let n_cam = data.cameras();
        for &(f, c) in &config.holdout {
            if f >= data.frames() || c >= n_cam {
                return Err(Error::Config(format!(
                    "holdout view ({f}, {c}) is not in the dataset"
                )));
            }
        }
        let is_holdout = |v: &ViewTargets| config.holdout.contains(&(v.frame, v.cam));
        let train_views = (0..views.len())
            .filter(|&i| !is_holdout(&views[i]))
            .collect();
        let holdout_views = (0..views.len())
            .filter(|&i| is_holdout(&views[i]))
            .collect();
        let (scene, tape, layout) = build_model(&config, &data.boxes, views.len());
        let adam = Adam::new(config.optim, tape.len());
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        Ok(Self {
            boxes: data.boxes.clone(),
            config,
            scene,
            tape,
            layout,
            views,
            train_views,
            holdout_views,
            step: 0,
            log: Vec::new(),
            adam,
            rng,
        })
    }

    pub fn loss(&self) -> BatchLoss<'_> {
        BatchLoss {
            scene: &self.scene,
            views: &self.views,
            layout: &self.layout,
            config: &self.config,
        }
    }

    pub fn sample_batch(&mut self) -> TrainBatch {
        sample_batch(
            &self.views,
            &self.train_views,
            self.config.batch_rays / 4,
            self.config.lidar_rays,
            &mut self.rng,
        )
    }

    /// Current softmax weights of the confidence maps.
    pub fn omega_weights(&self) -> [f64; N_MAPS] {
        let o = &self.tape.params()[self.layout.omega..self.layout.omega + N_MAPS];
        softmax(o).try_into().unwrap()
    }

    /// One optimization step on a fresh batch.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = self.sample_batch();
        self.tape.zero_grad();
        let (params, grads) = self.tape.split_mut();
        let loss = BatchLoss {
            scene: &self.scene,
            views: &self.views,
            layout: &self.layout,
            config: &self.config,
        };
        let (report, _) = loss.evaluate(
            params,
            &batch,
            &self.config.weights,
            PlanMode::Fresh { step: self.step },
            Some(grads),
            false,
        );
        self.tape.mark_recorded();
        if !report.is_finite() || self.tape.grads().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: format!("{report:?}"),
            });
        }
        self.tape.take_recorded()?;
        let scale = self.config.optim.schedule(self.step, self.config.steps);
        self.adam.step(&mut self.tape, scale);
        self.scene.sync_tracks(self.tape.params());
        if self.config.log_every > 0
            && (self.step.is_multiple_of(self.config.log_every)
                || self.step + 1 == self.config.steps)
        {
            self.log.push(LogRow {
                step: self.step,
                lr_scale: scale,
                loss: report,
                omega: self.omega_weights(),
            });
        }
        self.step += 1;
        Ok(report)
    }

    /// Train for the configured number of steps. With `out`, writes periodic
    /// checkpoints, the final `model.ckpt` and `log.csv`.
    pub fn run(
        &mut self,
        out: Option<&Path>,
        mut progress: impl FnMut(usize, &LossReport),
    ) -> Result<LossReport> {
        let mut last = LossReport::default();
        while self.step < self.config.steps {
            last = self.step()?;
            progress(self.step, &last);
            if let Some(dir) = out {
                let every = self.config.checkpoint_every;
                if every > 0 && self.step.is_multiple_of(every) && self.step < self.config.steps {
                    self.save_checkpoint(&dir.join(format!("step{:06}.ckpt", self.step)))?;
                }
            }
        }
        if let Some(dir) = out {
            self.save_checkpoint(&dir.join("model.ckpt"))?;
            write_atomic(&dir.join("log.csv"), self.log_csv().as_bytes())?;
        }
        Ok(last)
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from(
            "step,lr_scale,total,rgb,depth,lidar,semantic,distortion,proposal,smoothness,w_rgb,w_ssim,w_feat,w_depth,w_flow\n",
        );
        for r in &self.log {
            let l = &r.loss;
            let _ = write!(
                s,
                "{},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                r.step,
                r.lr_scale,
                l.total,
                l.rgb,
                l.depth,
                l.lidar,
                l.semantic,
                l.distortion,
                l.proposal,
                l.smoothness
            );
            for w in r.omega {
                let _ = write!(s, ",{w:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            step: self.step,
            config: self.config.clone(),
            boxes: self.boxes.clone(),
            views: self.views.len(),
            layout: self.layout.clone(),
        };
        save_checkpoint(path, &serde_json::to_value(&header)?, self.tape.params())
    }

    /// Render training or held-out view `view` with its learned pose offset.
    pub fn render_view(&self, view: usize) -> RenderedFrame {
        let v = &self.views[view];
        let cam = refined_camera(&v.camera, self.tape.params(), self.layout.pose[view]);
        render_image(&self.scene, self.tape.params(), &cam, v.time)
    }
}

/// A trained model restored from a checkpoint.
pub struct LoadedModel {
    pub config: TrainConfig,
    pub scene: SceneModel,
    pub tape: ParamTape,
    pub layout: ModelLayout,
    pub step: usize,
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let (header, params) = load_checkpoint(path)?;
        let h: CheckpointHeader = serde_json::from_value(header)?;
        if h.format != CHECKPOINT_FORMAT {
            return Err(Error::format(
                path,
                format!("unexpected checkpoint format {}", h.format),
            ));
        }
        let (mut scene, mut tape, layout) = build_model(&h.config, &h.boxes, h.views);
        if layout != h.layout {
            return Err(Error::format(
                path,
                "parameter layout does not match the configuration",
            ));
        }
        tape.set_params(&params)?;
        scene.sync_tracks(tape.params());
        Ok(Self {
            config: h.config,
            scene,
            tape,
            layout,
            step: h.step,
        })
    }

    /// Render `cam` at `time`. `view` selects a learned pose offset to apply.
    pub fn render(&self, cam: &CameraModel, time: f64, view: Option<usize>) -> RenderedFrame {
        let cam = match view.and_then(|v| self.layout.pose.get(v)) {
            Some(&o) => refined_camera(cam, self.tape.params(), o),
            None => cam.clone(),
        };
        render_image(&self.scene, self.tape.params(), &cam, time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_scene, SynthSpec};
    use crate::renderer::SceneConfig;

    fn dataset() -> Dataset {
        let spec = SynthSpec {
            width: 24,
            height: 16,
            frames: 3,
            camera_yaws_deg: vec![0.0],
            supersample: 1,
            ..SynthSpec::default()
        };
        generate_scene(&spec, 3).unwrap().1
    }

    fn config() -> TrainConfig {
        let mut scene = SceneConfig::compact();
        scene.sampling.proposal_samples = vec![16, 12];
        scene.sampling.final_samples = 8;
        TrainConfig {
            steps: 4,
            batch_rays: 16,
            lidar_rays: 4,
            scene,
            log_every: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let data = dataset();
        let mut a = Trainer::new(config(), &data).unwrap();
        let mut b = Trainer::new(config(), &data).unwrap();
        a.run(None, |_, _| {}).unwrap();
        b.run(None, |_, _| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.tape.params(), b.tape.params());
        assert!(a.log.iter().all(|r| r.loss.total > 0.0));
    }

    #[test]
    fn zero_learning_rate_is_bit_exact() {
        let data = dataset();
        let mut c = config();
        c.optim.lr_grid = 0.0;
        c.optim.lr_mlp = 0.0;
        c.optim.lr_pose = 0.0;
        c.optim.lr_track = 0.0;
        c.optim.lr_confidence = 0.0;
        let mut t = Trainer::new(c, &data).unwrap();
        let before = t.tape.params().to_vec();
        t.run(None, |_, _| {}).unwrap();
        assert_eq!(t.tape.params(), &before[..]);
    }

    #[test]
    fn semantic_loss_only_reaches_the_semantic_head() {
        let data = dataset();
        let mut t = Trainer::new(config(), &data).unwrap();
        let batch = t.sample_batch();
        let w = LossWeights {
            depth: 0.3,
            lidar: 0.3,
            semantic: 1.0,
            distortion: 0.0,
            proposal: 0.0,
            smoothness: 0.0,
        };
        let mut only_sem = t.config.clone();
        only_sem.use_confidence = false;
        let loss = BatchLoss {
            scene: &t.scene,
            views: &t.views,
            layout: &t.layout,
            config: &only_sem,
        };
        let (_, plans) = loss.evaluate(
            t.tape.params(),
            &batch,
            &w,
            PlanMode::Fresh { step: 0 },
            None,
            true,
        );
        let mut with_sem = vec![0.0; t.tape.len()];
        let mut without = vec![0.0; t.tape.len()];
        loss.evaluate(
            t.tape.params(),
            &batch,
            &w,
            PlanMode::Fixed(&plans),
            Some(&mut with_sem),
            false,
        );
        let w0 = LossWeights { semantic: 0.0, ..w };
        loss.evaluate(
            t.tape.params(),
            &batch,
            &w0,
            PlanMode::Fixed(&plans),
            Some(&mut without),
            false,
        );
        for g in t.tape.groups() {
            let diff = g.range().any(|i| with_sem[i] != without[i]);
            assert!(
                !diff || g.name.contains(".semantic."),
                "semantic loss leaked into {}",
                g.name
            );
        }
        assert!(
            t.tape
                .groups()
                .iter()
                .any(|g| g.name.contains(".semantic.")
                    && g.range().any(|i| with_sem[i] != without[i]))
        );
    }

    #[test]
    fn non_finite_parameters_abort_the_step() {
        let data = dataset();
        let mut t = Trainer::new(config(), &data).unwrap();
        let r = t.tape.group("background.density.layer0").unwrap().range();
        t.tape.params_mut()[r.end - 1] = f64::NAN;
        assert!(matches!(
            t.step(),
            Err(Error::NonFiniteLoss { step: 0, .. })
        ));
    }

    #[test]
    fn overfits_eight_rays() {
        let data = dataset();
        let mut c = config();
        c.jitter = false;
        c.optim.lr_grid = 1e-1;
        c.optim.lr_mlp = 1e-2;
        c.optim.final_lr_ratio = 0.0;
        let mut t = Trainer::new(c, &data).unwrap();
        // Eight well-separated pixels; patch geometry is irrelevant with the
        // smoothness weight at zero.
        let px = [
            (2, 3),
            (20, 2),
            (11, 8),
            (5, 14),
            (17, 12),
            (8, 5),
            (22, 9),
            (14, 1),
        ];
        let rays: Vec<BatchRay> = px
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| BatchRay {
                view: i % t.views.len(),
                x: x as f64,
                y: y as f64,
                lidar: None,
            })
            .collect();
        let batch = TrainBatch {
            patches: vec![rays[..4].try_into().unwrap(), rays[4..].try_into().unwrap()],
            lidar: Vec::new(),
        };
        let w = LossWeights {
            depth: 0.0,
            lidar: 0.0,
            semantic: 0.0,
            distortion: 0.0,
            proposal: 1.0,
            smoothness: 0.0,
        };
        let mut last = LossReport::default();
        for step in 0..200 {
            t.tape.zero_grad();
            let (params, grads) = t.tape.split_mut();
            let loss = BatchLoss {
                scene: &t.scene,
                views: &t.views,
                layout: &t.layout,
                config: &t.config,
            };
            (last, _) = loss.evaluate(
                params,
                &batch,
                &w,
                PlanMode::Fresh { step },
                Some(grads),
                false,
            );
            let scale = t.config.optim.schedule(step, 200);
            t.adam.step(&mut t.tape, scale);
        }
        assert!(last.rgb < 1e-3, "L_rgb = {}", last.rgb);
    }

    #[test]
    fn checkpoint_restores_the_model() {
        let data = dataset();
        let mut t = Trainer::new(config(), &data).unwrap();
        t.run(None, |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        t.save_checkpoint(&p).unwrap();
        let m = LoadedModel::load(&p).unwrap();
        assert_eq!(m.step, 4);
        assert_eq!(m.tape.len(), t.tape.len());
        for (a, b) in m.tape.params().iter().zip(t.tape.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let a = m.render(&t.views[0].camera, t.views[0].time, Some(0));
        let b = t.render_view(0);
        let err = a
            .rgb
            .data()
            .iter()
            .zip(b.rgb.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }
}
