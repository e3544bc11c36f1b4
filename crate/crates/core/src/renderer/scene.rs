//! Composite scene: background field, proposal cascade and per-object
//! fields routed by tracked boxes.

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{
    outer_bound, resample_edges, route_intervals, s_to_t, t_to_s, uniform_edges, RaySamples, Route,
    SamplingConfig,
};
use super::volume::{composite, weights_backward};
use crate::field::{
    Domain, FieldConfig, FieldGrad, FieldQuery, FieldRole, FieldScratch, GroupKind, ParamTape,
    RadianceField, MAX_CLASSES,
};
use crate::geometry::{box_to_object, segments_for_poses, BoxPose, Ray, Rigid, TrackedBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub sampling: SamplingConfig,
    pub background: FieldConfig,
    pub proposal: FieldConfig,
    pub object: FieldConfig,
    /// Background normalisation: world points map to `(x − center)/scene_scale`
    /// before contraction.
    pub center: Vector3<f64>,
    pub scene_scale: f64,
    pub near: f64,
    pub far: f64,
    pub classes: usize,
    pub sky_class: usize,
    pub sky_distance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let object = FieldConfig {
            multisample: false,
            grid: crate::field::GridConfig {
                levels: 4,
                base_resolution: 8,
                growth: 1.6,
                features: 2,
                log2_table_size: 15,
            },
            hidden: 32,
            ..FieldConfig::default()
        };
        Self {
            sampling: SamplingConfig::default(),
            background: FieldConfig::default(),
            proposal: FieldConfig::proposal(),
            object,
            center: Vector3::zeros(),
            scene_scale: 20.0,
            near: 0.2,
            far: 1000.0,
            classes: 5,
            sky_class: 4,
            sky_distance: 1e4,
        }
    }
}

impl SceneConfig {
    /// Small fields and short cascades for desk-scale scenes and tests.
    pub fn compact() -> Self {
        let grid = |levels, base, log2| crate::field::GridConfig {
            levels,
            base_resolution: base,
            growth: 1.6,
            features: 2,
            log2_table_size: log2,
        };
        Self {
            sampling: SamplingConfig {
                proposal_samples: vec![32, 24],
                final_samples: 16,
                ..SamplingConfig::default()
            },
            background: FieldConfig {
                grid: grid(6, 16, 16),
                hidden: 32,
                ..FieldConfig::default()
            },
            proposal: FieldConfig {
                grid: crate::field::GridConfig {
                    features: 1,
                    ..grid(4, 16, 14)
                },
                ..FieldConfig::proposal()
            },
            object: FieldConfig {
                grid: grid(3, 8, 12),
                hidden: 16,
                multisample: false,
                ..FieldConfig::default()
            },
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSlot {
    pub track: TrackedBox,
    pub field: RadianceField,
    /// Start of this track's `[δx, δy, δz, δθ]` offsets in the tape.
    pub offset_start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneModel {
    pub config: SceneConfig,
    pub background: RadianceField,
    pub proposals: Vec<RadianceField>,
    pub objects: Vec<ObjectSlot>,
}

#[derive(Clone, Debug)]
pub struct SceneScratch {
    background: FieldScratch,
    proposals: Vec<FieldScratch>,
    objects: Vec<FieldScratch>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderOutput {
    pub color: [f64; 3],
    pub disparity: f64,
    /// Class distribution including the sky fill `(1 − A)` on the sky class.
    pub semantics: [f64; MAX_CLASSES],
    pub opacity: f64,
    /// Weight mass routed to each object slot.
    pub object_mask: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTrace {
    pub samples: RaySamples,
    pub sigma: Vec<f64>,
    pub weights: Vec<f64>,
    pub trans: Vec<f64>,
    /// Stop-gradient upper bound from the next stage (proposal stages only).
    pub target: Vec<f64>,
}

impl StageTrace {
    fn deltas(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|i| self.samples.delta_t(i))
            .collect()
    }
}

/// Everything the reverse pass needs from one ray.
#[derive(Clone, Debug)]
pub struct RayTrace {
    pub ray: Ray,
    pub time: f64,
    pub proposals: Vec<StageTrace>,
    pub fine: StageTrace,
    pub colors: Vec<[f64; 3]>,
    pub probs: Vec<[f64; MAX_CLASSES]>,
    /// Detached weights used for the semantic rendering.
    pub sem_weights: Vec<f64>,
    pub output: RenderOutput,
    poses: Vec<Option<BoxPose>>,
}

/// Frozen non-differentiable choices of a trace: sample placement, routing,
/// and the stop-gradient quantities. Replaying a plan turns the rendered
/// losses into smooth functions of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RayPlan {
    pub stages: Vec<RaySamples>,
    pub proposal_sigma: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub sem_weights: Vec<f64>,
}

pub enum TraceMode<'a> {
    Fresh { jitter: Option<&'a mut ChaCha8Rng> },
    Fixed(&'a RayPlan),
}

/// Upstream gradients of one ray's outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayGrad {
    pub color: [f64; 3],
    pub disparity: f64,
    pub semantics: [f64; MAX_CLASSES],
    /// `∂L/∂w` on final-stage weights (empty for none).
    pub fine_weights: Vec<f64>,
    /// `∂L/∂w` per proposal stage (empty for none).
    pub proposal_weights: Vec<Vec<f64>>,
}

impl RayTrace {
    pub fn plan(&self) -> RayPlan {
        let mut stages: Vec<RaySamples> =
            self.proposals.iter().map(|s| s.samples.clone()).collect();
        stages.push(self.fine.samples.clone());
        RayPlan {
            stages,
            proposal_sigma: self.proposals.iter().map(|s| s.sigma.clone()).collect(),
            targets: self.proposals.iter().map(|s| s.target.clone()).collect(),
            sem_weights: self.sem_weights.clone(),
        }
    }
}

fn softmax(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

impl SceneModel {
    /// Build all fields and register one track-offset group per box.
    pub fn new(
        config: SceneConfig,
        boxes: Vec<TrackedBox>,
        tape: &mut ParamTape,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bg_domain = Domain::Contracted {
            center: config.center,
            scale: config.scene_scale,
        };
        let mut bg_cfg = config.background.clone();
        bg_cfg.classes = config.classes;
        let background = RadianceField::new(FieldRole::Background, bg_domain, bg_cfg, tape, rng);
        let proposals = (0..config.sampling.proposal_samples.len())
            .map(|k| {
                RadianceField::new(
                    FieldRole::Proposal(k),
                    bg_domain,
                    config.proposal.clone(),
                    tape,
                    rng,
                )
            })
            .collect();
        let mut obj_cfg = config.object.clone();
        obj_cfg.classes = config.classes;
        let objects = boxes
            .into_iter()
            .map(|track| {
                let field = RadianceField::new(
                    FieldRole::Object(track.id),
                    Domain::ObjectBox,
                    obj_cfg.clone(),
                    tape,
                    rng,
                );
                let offset_start = tape.alloc(
                    format!("track{}", track.id),
                    GroupKind::TrackOffset,
                    track.offsets_flat(),
                );
                ObjectSlot {
                    track,
                    field,
                    offset_start,
                }
            })
            .collect();
        Self {
            config,
            background,
            proposals,
            objects,
        }
    }

    pub fn scratch(&self) -> SceneScratch {
        SceneScratch {
            background: self.background.scratch(),
            proposals: self.proposals.iter().map(|p| p.scratch()).collect(),
            objects: self.objects.iter().map(|o| o.field.scratch()).collect(),
        }
    }

    fn track_offsets<'p>(&self, params: &'p [f64], j: usize) -> &'p [f64] {
        let o = &self.objects[j];
        &params[o.offset_start..o.offset_start + 4 * o.track.offset_times.len()]
    }

    /// Copy the learned track offsets from the tape into the box structs.
    pub fn sync_tracks(&mut self, params: &[f64]) {
        for j in 0..self.objects.len() {
            let off = self.track_offsets(params, j).to_vec();
            self.objects[j].track.set_offsets_flat(&off);
        }
    }

    /// Box poses at `time` with offsets read from `params`; `None` for boxes
    /// absent at that time.
    pub fn box_poses(&self, params: &[f64], time: f64) -> Vec<Option<BoxPose>> {
        (0..self.objects.len())
            .map(|j| {
                self.objects[j]
                    .track
                    .interpolate_pose_with(time, self.track_offsets(params, j))
                    .ok()
            })
            .collect()
    }

    fn samples_for(
        &self,
        ray: &Ray,
        mut edges_s: Vec<f64>,
        poses: &[Option<BoxPose>],
    ) -> RaySamples {
        let scale = self.config.sampling.contraction_distance;
        let posed: Vec<(u32, Rigid, Vector3<f64>)> = poses
            .iter()
            .enumerate()
            .filter_map(|(j, p)| {
                p.as_ref()
                    .map(|bp| (j as u32, bp.pose, self.objects[j].track.dim))
            })
            .collect();
        let segs = segments_for_poses(ray, &posed);
        let k = self.config.sampling.object_samples;
        if k > 0 && !segs.is_empty() {
            // Split intervals at box boundaries and add `k` edges inside every
            // box the ray crosses, so objects are sampled from the start. The
            // irregular spacing keeps midpoints off the box center planes.
            let (lo, hi) = (edges_s[0], t_to_s(ray.t_far, scale));
            let fractions = std::iter::once(0.0)
                .chain((0..k).map(|i| (i as f64 + 0.381966) / k as f64))
                .chain(std::iter::once(1.0));
            let fractions: Vec<f64> = fractions.collect();
            for seg in &segs {
                for &f in &fractions {
                    let t = seg.t_enter + (seg.t_exit - seg.t_enter) * f;
                    let sv = t_to_s(t, scale);
                    if sv > lo && sv < hi {
                        edges_s.push(sv);
                    }
                }
            }
            edges_s.sort_by(|a, b| a.total_cmp(b));
            edges_s.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        }
        let mut edges_t: Vec<f64> = edges_s.iter().map(|&s| s_to_t(s, scale)).collect();
        edges_t[0] = ray.t_near;
        let n = edges_t.len() - 1;
        edges_t[n] = edges_t[n].min(ray.t_far);
        let route = route_intervals(&edges_t, &segs, |id| Some(id as usize));
        RaySamples {
            edges_s,
            edges_t,
            route,
        }
    }

    fn object_query(&self, j: usize, pose: &BoxPose, ray: &Ray, t: f64) -> FieldQuery {
        let c = box_to_object(
            &ray.at(t),
            &ray.dir,
            ray.radius_at(t),
            &pose.pose,
            &self.objects[j].track.dim,
        );
        FieldQuery {
            pos: c.pos,
            dir: c.dir,
            radius: c.radius,
        }
    }

    fn proposal_stage(
        &self,
        params: &[f64],
        k: usize,
        ray: &Ray,
        samples: RaySamples,
        poses: &[Option<BoxPose>],
        frozen: Option<&[f64]>,
        s: &mut SceneScratch,
    ) -> StageTrace {
        let n = samples.len();
        let mut sigma = vec![0.0; n];
        for i in 0..n {
            let t = samples.mid_t(i);
            sigma[i] = match samples.route[i] {
                Route::Background => {
                    let q = FieldQuery {
                        pos: ray.at(t),
                        dir: ray.dir,
                        radius: ray.radius_at(t),
                    };
                    self.proposals[k]
                        .query(params, &q, false, &mut s.proposals[k])
                        .sigma
                }
                Route::Object(j) => match frozen {
                    Some(f) => f[i],
                    None => {
                        let q = self.object_query(j, poses[j].as_ref().unwrap(), ray, t);
                        self.objects[j]
                            .field
                            .query(params, &q, false, &mut s.objects[j])
                            .sigma
                    }
                },
            };
        }
        let delta: Vec<f64> = (0..n).map(|i| samples.delta_t(i)).collect();
        let mut weights = vec![0.0; n];
        let mut trans = vec![0.0; n];
        composite(&sigma, &delta, &mut weights, &mut trans);
        StageTrace {
            samples,
            sigma,
            weights,
            trans,
            target: Vec::new(),
        }
    }

    /// Trace one ray through the cascade at scene time `time`.
    pub fn trace(
        &self,
        params: &[f64],
        ray: &Ray,
        time: f64,
        mode: TraceMode<'_>,
        s: &mut SceneScratch,
    ) -> RayTrace {
        let cfg = &self.config.sampling;
        let poses = self.box_poses(params, time);
        let n_prop = self.proposals.len();
        let mut proposals = Vec::with_capacity(n_prop);
        let (fine_samples, plan) = match mode {
            TraceMode::Fresh { mut jitter } => {
                let scale = cfg.contraction_distance;
                let (s0, s1) = (t_to_s(ray.t_near, scale), t_to_s(ray.t_far, scale));
                let first = cfg
                    .proposal_samples
                    .first()
                    .copied()
                    .unwrap_or(cfg.final_samples);
                let mut edges = uniform_edges(s0, s1, first, jitter.as_deref_mut());
                for k in 0..n_prop {
                    let samples = self.samples_for(ray, edges, &poses);
                    let st = self.proposal_stage(params, k, ray, samples, &poses, None, s);
                    let next = cfg
                        .proposal_samples
                        .get(k + 1)
                        .copied()
                        .unwrap_or(cfg.final_samples);
                    edges = resample_edges(
                        &st.samples.edges_s,
                        &st.weights,
                        next,
                        cfg.resample_padding,
                        jitter.as_deref_mut(),
                    );
                    proposals.push(st);
                }
                (self.samples_for(ray, edges, &poses), None)
            }
            TraceMode::Fixed(plan) => {
                for k in 0..n_prop {
                    let st = self.proposal_stage(
                        params,
                        k,
                        ray,
                        plan.stages[k].clone(),
                        &poses,
                        Some(&plan.proposal_sigma[k]),
                        s,
                    );
                    proposals.push(st);
                }
                (plan.stages[n_prop].clone(), Some(plan))
            }
        };

        let n = fine_samples.len();
        let k_cls = self.config.classes;
        let mut sigma = vec![0.0; n];
        let mut colors = vec![[0.0; 3]; n];
        let mut probs = vec![[0.0; MAX_CLASSES]; n];
        for i in 0..n {
            let t = fine_samples.mid_t(i);
            let out = match fine_samples.route[i] {
                Route::Background => {
                    let q = FieldQuery {
                        pos: ray.at(t),
                        dir: ray.dir,
                        radius: ray.radius_at(t),
                    };
                    self.background.query(params, &q, true, &mut s.background)
                }
                Route::Object(j) => {
                    let q = self.object_query(j, poses[j].as_ref().unwrap(), ray, t);
                    self.objects[j]
                        .field
                        .query(params, &q, true, &mut s.objects[j])
                }
            };
            sigma[i] = out.sigma;
            colors[i] = out.color;
            softmax(&out.logits[..k_cls], &mut probs[i][..k_cls]);
        }
        let delta: Vec<f64> = (0..n).map(|i| fine_samples.delta_t(i)).collect();
        let mut weights = vec![0.0; n];
        let mut trans = vec![0.0; n];
        let opacity = composite(&sigma, &delta, &mut weights, &mut trans);
        let fine = StageTrace {
            samples: fine_samples,
            sigma,
            weights,
            trans,
            target: Vec::new(),
        };

        match plan {
            Some(p) => {
                for (st, tg) in proposals.iter_mut().zip(&p.targets) {
                    st.target = tg.clone();
                }
            }
            None => {
                for k in 0..n_prop {
                    let (next_edges, next_w) = if k + 1 < n_prop {
                        (&proposals[k + 1].samples.edges_s, &proposals[k + 1].weights)
                    } else {
                        (&fine.samples.edges_s, &fine.weights)
                    };
                    let tg = outer_bound(&proposals[k].samples.edges_s, next_edges, next_w);
                    proposals[k].target = tg;
                }
            }
        }
        let sem_weights = plan.map_or_else(|| fine.weights.clone(), |p| p.sem_weights.clone());

        let mut output = RenderOutput {
            opacity,
            object_mask: vec![0.0; self.objects.len()],
            ..Default::default()
        };
        let inv_sky = 1.0 / self.config.sky_distance;
        let mut sem_acc = 0.0;
        for i in 0..n {
            let w = fine.weights[i];
            for c in 0..3 {
                output.color[c] += w * colors[i][c];
            }
            output.disparity += w / fine.samples.mid_t(i);
            for c in 0..k_cls {
                output.semantics[c] += sem_weights[i] * probs[i][c];
            }
            sem_acc += sem_weights[i];
            if let Route::Object(j) = fine.samples.route[i] {
                output.object_mask[j] += w;
            }
        }
        output.disparity += (1.0 - opacity) * inv_sky;
        output.semantics[self.config.sky_class] += (1.0 - sem_acc).max(0.0);

        RayTrace {
            ray: *ray,
            time,
            proposals,
            fine,
            colors,
            probs,
            sem_weights,
            output,
            poses,
        }
    }

    /// Chain object-frame gradients to world position/direction and to the
    /// track offsets.
    fn object_chain(
        &self,
        j: usize,
        pose: &BoxPose,
        x: &Vector3<f64>,
        d: &Vector3<f64>,
        d_pos: &Vector3<f64>,
        d_dir: &Vector3<f64>,
        grads: &mut [f64],
    ) -> (Vector3<f64>, Vector3<f64>) {
        let slot = &self.objects[j];
        let r = &pose.pose.rot;
        let d_local = d_pos.component_div(&slot.track.dim);
        let d_x = r * d_local;
        let d_d = r * d_dir;
        let ez = Vector3::z();
        let rel = x - pose.pose.trans;
        let d_theta = -d_local.dot(&r.tr_mul(&ez.cross(&rel))) - d_dir.dot(&r.tr_mul(&ez.cross(d)));
        for &(i, w) in &pose.offset_weights {
            if i == usize::MAX {
                continue;
            }
            let o = slot.offset_start + 4 * i;
            for k in 0..3 {
                grads[o + k] -= w * d_x[k];
            }
            grads[o + 3] += w * d_theta;
        }
        (d_x, d_d)
    }

    /// Reverse pass of [`trace`](Self::trace). Accumulates parameter
    /// gradients and returns `(∂/∂origin, ∂/∂dir)` of the ray.
    pub fn backward(
        &self,
        params: &[f64],
        tr: &RayTrace,
        g: &RayGrad,
        grads: &mut [f64],
        s: &mut SceneScratch,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let ray = &tr.ray;
        let mut d_origin = Vector3::zeros();
        let mut d_raydir = Vector3::zeros();
        let k_cls = self.config.classes;
        let inv_sky = 1.0 / self.config.sky_distance;

        let fine = &tr.fine;
        let n = fine.samples.len();
        let mut d_w = vec![0.0; n];
        for i in 0..n {
            let c = &tr.colors[i];
            d_w[i] = g.color[0] * c[0]
                + g.color[1] * c[1]
                + g.color[2] * c[2]
                + g.disparity * (1.0 / fine.samples.mid_t(i) - inv_sky);
            if let Some(v) = g.fine_weights.get(i) {
                d_w[i] += v;
            }
        }
        let delta = fine.deltas();
        let mut d_sigma = vec![0.0; n];
        weights_backward(
            &fine.sigma,
            &delta,
            &fine.weights,
            &fine.trans,
            &d_w,
            &mut d_sigma,
        );
        let sem_active = g.semantics[..k_cls].iter().any(|&v| v != 0.0);
        for i in 0..n {
            let w = fine.weights[i];
            let mut fg = FieldGrad {
                sigma: d_sigma[i],
                color: [w * g.color[0], w * g.color[1], w * g.color[2]],
                logits: [0.0; MAX_CLASSES],
            };
            if sem_active {
                let p = &tr.probs[i];
                let dot: f64 = (0..k_cls).map(|c| p[c] * g.semantics[c]).sum();
                for c in 0..k_cls {
                    fg.logits[c] = tr.sem_weights[i] * p[c] * (g.semantics[c] - dot);
                }
            }
            if fg.sigma == 0.0
                && fg.color.iter().all(|&v| v == 0.0)
                && fg.logits.iter().all(|&v| v == 0.0)
            {
                continue;
            }
            let t = fine.samples.mid_t(i);
            let x = ray.at(t);
            match fine.samples.route[i] {
                Route::Background => {
                    let q = FieldQuery {
                        pos: x,
                        dir: ray.dir,
                        radius: ray.radius_at(t),
                    };
                    let (dp, dd) =
                        self.background
                            .backward(params, &q, &fg, grads, &mut s.background);
                    d_origin += dp;
                    d_raydir += dp * t + dd;
                }
                Route::Object(j) => {
                    let pose = tr.poses[j].as_ref().unwrap();
                    let q = self.object_query(j, pose, ray, t);
                    let (dp, dd) =
                        self.objects[j]
                            .field
                            .backward(params, &q, &fg, grads, &mut s.objects[j]);
                    let (dx, ddir) = self.object_chain(j, pose, &x, &ray.dir, &dp, &dd, grads);
                    d_origin += dx;
                    d_raydir += dx * t + ddir;
                }
            }
        }

        for (k, st) in tr.proposals.iter().enumerate() {
            let Some(dw) = g.proposal_weights.get(k).filter(|v| !v.is_empty()) else {
                continue;
            };
            let n = st.samples.len();
            let delta = st.deltas();
            let mut d_sigma = vec![0.0; n];
            weights_backward(&st.sigma, &delta, &st.weights, &st.trans, dw, &mut d_sigma);
            for i in 0..n {
                // Object σ in proposal stages is a stop-gradient input.
                if st.samples.route[i] != Route::Background || d_sigma[i] == 0.0 {
                    continue;
                }
                let t = st.samples.mid_t(i);
                let q = FieldQuery {
                    pos: ray.at(t),
                    dir: ray.dir,
                    radius: ray.radius_at(t),
                };
                let dp = self.proposals[k].backward_density(
                    params,
                    &q,
                    d_sigma[i],
                    grads,
                    &mut s.proposals[k],
                );
                d_origin += dp;
                d_raydir += dp * t;
            }
        }
        (d_origin, d_raydir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridConfig;
    use crate::geometry::rot_z;
    use crate::geometry::{Keyframe, TrackedBox};
    use rand::{Rng, SeedableRng};

    pub(crate) fn tiny_config() -> SceneConfig {
        let grid = GridConfig {
            levels: 3,
            base_resolution: 4,
            growth: 2.0,
            features: 2,
            log2_table_size: 12,
        };
        SceneConfig {
            sampling: SamplingConfig {
                proposal_samples: vec![12, 10],
                final_samples: 8,
                resample_padding: 0.0,
                contraction_distance: 5.0,
                object_samples: 3,
            },
            background: FieldConfig {
                grid: grid.clone(),
                hidden: 8,
                layers: 2,
                ..FieldConfig::default()
            },
            proposal: FieldConfig {
                grid: grid.clone(),
                hidden: 8,
                layers: 1,
                classes: 0,
                multisample: false,
                zero_init: false,
            },
            object: FieldConfig {
                grid,
                hidden: 8,
                layers: 2,
                multisample: false,
                ..FieldConfig::default()
            },
            center: Vector3::new(2.0, 0.0, 0.0),
            scene_scale: 6.0,
            near: 0.1,
            far: 50.0,
            ..SceneConfig::default()
        }
    }

    fn moving_box() -> TrackedBox {
        TrackedBox::new(
            5,
            3,
            vec![
                Keyframe {
                    time: 0.0,
                    rot: rot_z(0.2),
                    trans: Vector3::new(4.0, -0.3, 0.0),
                },
                Keyframe {
                    time: 1.0,
                    rot: rot_z(0.4),
                    trans: Vector3::new(4.0, 0.3, 0.0),
                },
            ],
            Vector3::new(2.0, 1.5, 1.2),
        )
        .unwrap()
        .with_offset_times(vec![0.0, 0.5, 1.0])
    }

    fn scene() -> (SceneModel, ParamTape) {
        let mut tape = ParamTape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sc = SceneModel::new(tiny_config(), vec![moving_box()], &mut tape, &mut rng);
        let mut r2 = ChaCha8Rng::seed_from_u64(8);
        for g in tape.groups().to_vec() {
            if g.kind == GroupKind::Grid {
                for v in &mut tape.params_mut()[g.range()] {
                    *v = r2.gen_range(-0.3..0.3);
                }
            }
        }
        // Dense object, thin background proposals: the cascade must find the box.
        let bias = tape.group("object5.density.layer0").unwrap().range().end - 1;
        tape.params_mut()[bias] = 3.0;
        (sc, tape)
    }

    #[test]
    fn routing_matches_box_membership() {
        let (sc, tape) = scene();
        let mut s = sc.scratch();
        let ray = Ray::new(Vector3::zeros(), Vector3::new(1.0, 0.02, 0.01), 0.1, 50.0);
        let tr = sc.trace(
            tape.params(),
            &ray,
            0.5,
            TraceMode::Fresh { jitter: None },
            &mut s,
        );
        let pose = sc.box_poses(tape.params(), 0.5)[0].clone().unwrap();
        let dim = sc.objects[0].track.dim;
        let mut routed = 0;
        for st in tr
            .proposals
            .iter()
            .map(|p| &p.samples)
            .chain(std::iter::once(&tr.fine.samples))
        {
            for i in 0..st.len() {
                let c = box_to_object(&ray.at(st.mid_t(i)), &ray.dir, 0.0, &pose.pose, &dim);
                let inside = c.pos.iter().all(|v| v.abs() <= 0.5 + 1e-6);
                assert_eq!(inside, st.route[i] == Route::Object(0));
                routed += inside as usize;
            }
            assert!(st.edges_t.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(routed > 0);
        let w: f64 = tr.fine.weights.iter().sum();
        assert!(w <= 1.0 + 1e-6 && (w - tr.output.opacity).abs() < 1e-12);
        let sem: f64 = tr.output.semantics.iter().sum();
        assert!((sem - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_plan_replays_fresh_trace() {
        let (sc, tape) = scene();
        let mut s = sc.scratch();
        let ray = Ray::new(
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::new(1.0, 0.05, -0.02),
            0.1,
            50.0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sc.trace(
            tape.params(),
            &ray,
            0.3,
            TraceMode::Fresh {
                jitter: Some(&mut rng),
            },
            &mut s,
        );
        let plan = a.plan();
        let b = sc.trace(tape.params(), &ray, 0.3, TraceMode::Fixed(&plan), &mut s);
        assert_eq!(a.output, b.output);
        assert_eq!(a.proposals, b.proposals);
    }

    #[test]
    fn output_gradients_match_finite_differences() {
        let (sc, tape) = scene();
        let mut s = sc.scratch();
        let params = tape.params().to_vec();
        let ray = Ray::new(
            Vector3::new(0.0, 0.1, 0.2),
            Vector3::new(1.0, 0.03, -0.05),
            0.1,
            50.0,
        );
        let tr = sc.trace(
            &params,
            &ray,
            0.4,
            TraceMode::Fresh { jitter: None },
            &mut s,
        );
        let plan = tr.plan();
        let g = RayGrad {
            color: [0.3, -0.7, 0.5],
            disparity: 2.0,
            semantics: [0.4, -0.2, 0.1, 0.9, -0.5, 0.0, 0.0, 0.0],
            fine_weights: (0..tr.fine.samples.len())
                .map(|i| 0.1 * i as f64 - 0.2)
                .collect(),
            proposal_weights: tr
                .proposals
                .iter()
                .map(|p| {
                    (0..p.samples.len())
                        .map(|i| (i as f64 * 0.37).sin())
                        .collect()
                })
                .collect(),
        };
        // The semantic head reads detached trunk features, so the semantic
        // output only enters the oracle for semantic-head parameters.
        let objective_with = |p: &[f64], ray: &Ray, s: &mut SceneScratch, sem: bool| {
            let t = sc.trace(p, ray, 0.4, TraceMode::Fixed(&plan), s);
            let o = &t.output;
            let mut v = g.disparity * o.disparity;
            for c in 0..3 {
                v += g.color[c] * o.color[c];
            }
            if sem {
                for c in 0..5 {
                    v += g.semantics[c] * o.semantics[c];
                }
            }
            v += t
                .fine
                .weights
                .iter()
                .zip(&g.fine_weights)
                .map(|(a, b)| a * b)
                .sum::<f64>();
            for (st, gw) in t.proposals.iter().zip(&g.proposal_weights) {
                v += st.weights.iter().zip(gw).map(|(a, b)| a * b).sum::<f64>();
            }
            v
        };
        let objective =
            |p: &[f64], ray: &Ray, s: &mut SceneScratch| objective_with(p, ray, s, false);
        let mut grads = vec![0.0; params.len()];
        let (d_o, d_d) = sc.backward(&params, &tr, &g, &mut grads, &mut s);
        let eps = 1e-5;
        let mut checked = 0;
        for grp in tape.groups() {
            let sem = grp.name.contains(".semantic");
            let idx: Vec<usize> = grp.range().filter(|&i| grads[i] != 0.0).collect();
            for &i in idx.iter().step_by((idx.len() / 6).max(1)) {
                let mut pp = params.clone();
                pp[i] += eps;
                let mut pm = params.clone();
                pm[i] -= eps;
                let fd = (objective_with(&pp, &ray, &mut s, sem)
                    - objective_with(&pm, &ray, &mut s, sem))
                    / (2.0 * eps);
                let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-7);
                assert!(rel < 1e-3, "{} [{i}]: fd {fd} vs {}", grp.name, grads[i]);
                checked += 1;
            }
        }
        assert!(checked > 40);
        // Track offsets receive gradient.
        let track = tape.group("track5").unwrap().range();
        assert!(grads[track].iter().any(|&v| v != 0.0));
        for k in 0..3 {
            let mut rp = ray;
            rp.origin[k] += eps;
            let mut rm = ray;
            rm.origin[k] -= eps;
            let fd =
                (objective(&params, &rp, &mut s) - objective(&params, &rm, &mut s)) / (2.0 * eps);
            assert!(
                (fd - d_o[k]).abs() < 1e-3 * (1.0 + fd.abs()),
                "origin {k}: {fd} vs {}",
                d_o[k]
            );
            let mut rp = ray;
            rp.dir[k] += eps;
            let mut rm = ray;
            rm.dir[k] -= eps;
            let fd =
                (objective(&params, &rp, &mut s) - objective(&params, &rm, &mut s)) / (2.0 * eps);
            assert!(
                (fd - d_d[k]).abs() < 1e-3 * (1.0 + fd.abs()),
                "dir {k}: {fd} vs {}",
                d_d[k]
            );
        }
    }
}
