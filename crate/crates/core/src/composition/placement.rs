use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ground::GroundPlan;
use crate::error::{Error, Result};
use crate::geometry::{wrap_pi, Rigid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub valid_labels: Vec<u16>,
    pub count: usize,
    /// Object footprint `(length, width)` in meters.
    pub footprint: [f64; 2],
    /// Added to every side of the footprint for collision tests.
    pub inflate: f64,
    pub attempts_per_object: usize,
    /// Trace mode: uniform position perturbation half-width (meters).
    pub trace_offset: f64,
    /// Trace mode: uniform yaw perturbation half-width (radians).
    pub trace_yaw: f64,
    /// Trace mode: largest accepted deviation from the trace heading.
    pub lane_tolerance: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            valid_labels: vec![crate::harness::GROUND],
            count: 1,
            footprint: [4.2, 1.8],
            inflate: 0.3,
            attempts_per_object: 1000,
            trace_offset: 1.5,
            trace_yaw: 45f64.to_radians(),
            lane_tolerance: 30f64.to_radians(),
        }
    }
}

/// A historical vehicle pose on the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePose {
    pub position: [f64; 2],
    pub yaw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl Placement {
    /// Object→world transform.
    pub fn pose(&self) -> Rigid {
        Rigid::from_yaw(self.yaw, self.position)
    }
}

/// Oriented rectangle on the ground plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub center: Vector2<f64>,
    pub yaw: f64,
    pub half: [f64; 2],
}

impl Footprint {
    pub fn new(center: [f64; 2], yaw: f64, size: [f64; 2], inflate: f64) -> Self {
        Self {
            center: Vector2::new(center[0], center[1]),
            yaw,
            half: [0.5 * size[0] + inflate, 0.5 * size[1] + inflate],
        }
    }

    fn axes(&self) -> [Vector2<f64>; 2] {
        let (s, c) = self.yaw.sin_cos();
        [Vector2::new(c, s), Vector2::new(-s, c)]
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let [u, v] = self.axes();
        let (a, b) = (u * self.half[0], v * self.half[1]);
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    /// Separating-axis test; touching edges count as overlap.
    pub fn overlaps(&self, other: &Footprint) -> bool {
        let d = other.center - self.center;
        let (au, bu) = (self.axes(), other.axes());
        au.iter().chain(bu.iter()).all(|axis| {
            let ra = self.half[0] * au[0].dot(axis).abs() + self.half[1] * au[1].dot(axis).abs();
            let rb = other.half[0] * bu[0].dot(axis).abs() + other.half[1] * bu[1].dot(axis).abs();
            d.dot(axis).abs() <= ra + rb
        })
    }
}

/// Draw `cfg.count` collision-free placements on cells labeled in
/// `cfg.valid_labels`. Without traces, positions are uniform over valid
/// cells with in-cell jitter and yaw is uniform. With traces, a trace pose is
/// perturbed and kept only when it lands on a valid cell and its heading
/// stays within `lane_tolerance` of the trace.
pub fn sample_placement(
    plan: &GroundPlan,
    cfg: &PlacementConfig,
    seed: u64,
    traces: Option<&[TracePose]>,
) -> Result<Vec<Placement>> {
    if cfg.count == 0 {
        return Err(Error::Config("placement count must be at least 1".into()));
    }
    let cells = plan.cells_with(&cfg.valid_labels);
    if cells.is_empty() {
        return Err(Error::PlacementUnavailable(
            "no cell carries a valid label".into(),
        ));
    }
    if traces.is_some_and(|t| t.is_empty()) {
        return Err(Error::PlacementUnavailable(
            "trace mode with no trace poses".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(Placement, Footprint)> = Vec::with_capacity(cfg.count);
    let budget = cfg.attempts_per_object * cfg.count;
    let mut attempts = 0;
    while placed.len() < cfg.count {
        if attempts == budget {
            return Err(Error::PlacementUnavailable(format!(
                "placed {} of {} objects in {budget} attempts",
                placed.len(),
                cfg.count
            )));
        }
        attempts += 1;
        let (xy, yaw) = match traces {
            None => {
                let (i, j) = cells[rng.gen_range(0..cells.len())];
                let c = plan.cell_center(i, j);
                let jx = rng.gen_range(-0.5..0.5) * plan.cell;
                let jy = rng.gen_range(-0.5..0.5) * plan.cell;
                (
                    [c[0] + jx, c[1] + jy],
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            }
            Some(tr) => {
                let t = tr[rng.gen_range(0..tr.len())];
                let dx = rng.gen_range(-1.0..=1.0) * cfg.trace_offset;
                let dy = rng.gen_range(-1.0..=1.0) * cfg.trace_offset;
                let yaw = wrap_pi(t.yaw + rng.gen_range(-1.0..=1.0) * cfg.trace_yaw);
                if wrap_pi(yaw - t.yaw).abs() > cfg.lane_tolerance {
                    continue;
                }
                ([t.position[0] + dx, t.position[1] + dy], yaw)
            }
        };
        if !cfg.valid_labels.contains(&plan.label_at(xy[0], xy[1])) {
            continue;
        }
        let z = plan.height_at(xy[0], xy[1]).expect("labeled cell");
        let fp = Footprint::new(xy, yaw, cfg.footprint, cfg.inflate);
        if placed.iter().any(|(_, other)| other.overlaps(&fp)) {
            continue;
        }
        placed.push((
            Placement {
                position: Vector3::new(xy[0], xy[1], z),
                yaw,
            },
            fp,
        ));
    }
    Ok(placed.into_iter().map(|(p, _)| p).collect())
}
