//! Ray interval construction in contracted distance and inverse-CDF
//! resampling between cascade stages.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BoxSegment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Interval counts of the proposal stages, coarse to fine.
    pub proposal_samples: Vec<usize>,
    pub final_samples: usize,
    /// Uniform weight mass mixed into every bin before resampling.
    pub resample_padding: f64,
    /// Distance (meters) beyond which ray distance is contracted.
    pub contraction_distance: f64,
    /// Intervals forced inside every box a ray crosses, per stage.
    pub object_samples: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            proposal_samples: vec![64, 64],
            final_samples: 32,
            resample_padding: 0.0,
            contraction_distance: 10.0,
            object_samples: 4,
        }
    }
}

/// Normalized contracted distance `g(t/S)`, `g(x) = x` below 1, else `2 − 1/x`.
#[inline]
pub fn t_to_s(t: f64, scale: f64) -> f64 {
    let x = t / scale;
    if x < 1.0 {
        x
    } else {
        2.0 - 1.0 / x
    }
}

#[inline]
pub fn s_to_t(s: f64, scale: f64) -> f64 {
    if s < 1.0 {
        s * scale
    } else {
        scale / (2.0 - s).max(1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Background,
    /// Index into the scene's object list.
    Object(usize),
}

/// Intervals along a ray with their field routing.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub edges_s: Vec<f64>,
    pub edges_t: Vec<f64>,
    pub route: Vec<Route>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.route.len()
    }

    pub fn is_empty(&self) -> bool {
        self.route.is_empty()
    }

    pub fn mid_t(&self, i: usize) -> f64 {
        0.5 * (self.edges_t[i] + self.edges_t[i + 1])
    }

    pub fn delta_t(&self, i: usize) -> f64 {
        self.edges_t[i + 1] - self.edges_t[i]
    }
}

/// `n + 1` edges evenly spaced in `s` over `[s_near, s_far]`. With `rng`,
/// the interior edges share a random sub-bin shift.
pub fn uniform_edges(s_near: f64, s_far: f64, n: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    let step = (s_far - s_near) / n as f64;
    let shift = rng.map_or(0.0, |r| (r.gen::<f64>() - 0.5) * step);
    (0..=n)
        .map(|k| {
            if k == 0 {
                s_near
            } else if k == n {
                s_far
            } else {
                s_near + (k as f64) * step + shift
            }
        })
        .collect()
}

/// Draw `n + 1` edges from the piecewise-constant density given by `weights`
/// over `edges`. Deterministic quantiles `(k + ½)/(n + 1)` unless `rng` is
/// given, in which case each quantile is jittered within its stratum.
pub fn resample_edges(
    edges: &[f64],
    weights: &[f64],
    n: usize,
    padding: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<f64> {
    debug_assert_eq!(edges.len(), weights.len() + 1);
    let mut cdf = Vec::with_capacity(edges.len());
    cdf.push(0.0);
    let mut total = 0.0;
    for &w in weights {
        total += w.max(0.0) + padding;
        cdf.push(total);
    }
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    if !(total > 0.0) || !total.is_finite() {
        return uniform_edges(lo, hi, n, None);
    }
    for c in &mut cdf {
        *c /= total;
    }
    let quantiles: Vec<f64> = match rng {
        Some(r) => (0..=n)
            .map(|k| (k as f64 + r.gen::<f64>()) / (n + 1) as f64)
            .collect(),
        None => (0..=n).map(|k| (k as f64 + 0.5) / (n + 1) as f64).collect(),
    };
    let mut out = Vec::with_capacity(n + 1);
    for u in quantiles {
        // First bin whose upper CDF value exceeds u; zero-mass bins are skipped.
        let j = cdf[1..].partition_point(|&c| c <= u).min(weights.len() - 1);
        let (c0, c1) = (cdf[j], cdf[j + 1]);
        let f = if c1 > c0 {
            ((u - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(edges[j] + f * (edges[j + 1] - edges[j]));
    }
    // Keep intervals non-degenerate.
    let min_gap = (hi - lo) * 1e-9;
    for k in 1..out.len() {
        if out[k] <= out[k - 1] + min_gap {
            out[k] = out[k - 1] + min_gap;
        }
    }
    out
}

/// Route each interval by its `t` midpoint: the first box segment (by entry
/// distance) containing it, else the background.
pub fn route_intervals(
    edges_t: &[f64],
    segments: &[BoxSegment],
    object_index: impl Fn(u32) -> Option<usize>,
) -> Vec<Route> {
    edges_t
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            segments
                .iter()
                .find(|s| m >= s.t_enter && m <= s.t_exit)
                .and_then(|s| object_index(s.box_id))
                .map_or(Route::Background, Route::Object)
        })
        .collect()
}

/// Sum of fine weights over fine intervals overlapping each coarse interval
/// (upper bound on the coarse mass).
pub fn outer_bound(coarse: &[f64], fine: &[f64], fine_w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coarse.len() - 1];
    let mut start = 0;
    for (j, o) in out.iter_mut().enumerate() {
        let (a, b) = (coarse[j], coarse[j + 1]);
        while start < fine_w.len() && fine[start + 1] <= a {
            start += 1;
        }
        let mut i = start;
        while i < fine_w.len() && fine[i] < b {
            if fine[i + 1] > a {
                *o += fine_w[i];
            }
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn distance_maps_are_inverse() {
        for t in [0.0, 0.3, 5.0, 10.0, 17.0, 900.0] {
            assert!((s_to_t(t_to_s(t, 10.0), 10.0) - t).abs() < 1e-9 * (1.0 + t));
        }
        assert!(t_to_s(1e12, 10.0) < 2.0);
    }

    #[test]
    fn uniform_weights_give_stratified_uniform_samples() {
        let edges: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let w = vec![1.0 / 64.0; 64];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = resample_edges(&edges, &w, 999, 0.0, Some(&mut rng));
        // Chi-square against uniform over 10 bins.
        let mut counts = [0usize; 10];
        for s in &out {
            counts[((s * 10.0) as usize).min(9)] += 1;
        }
        let e = out.len() as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99th percentile of chi-square with 9 dof.
        assert!(chi2 < 21.67, "chi2 = {chi2}");
    }

    #[test]
    fn degenerate_weights_stay_inside_the_bin() {
        let edges: Vec<f64> = (0..=8).map(|k| k as f64).collect();
        let mut w = vec![0.0; 8];
        w[5] = 1.0;
        let out = resample_edges(&edges, &w, 32, 0.0, None);
        assert!(out.iter().all(|&s| (5.0..=6.0).contains(&s)));
        assert!(out.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn routing_follows_segments() {
        let edges = [0.0, 1.0, 2.0, 3.0, 4.0];
        let segs = [BoxSegment {
            t_enter: 1.2,
            t_exit: 2.9,
            box_id: 7,
        }];
        let r = route_intervals(&edges, &segs, |id| (id == 7).then_some(0));
        assert_eq!(
            r,
            vec![
                Route::Background,
                Route::Object(0),
                Route::Object(0),
                Route::Background
            ]
        );
    }

    #[test]
    fn outer_bound_of_aligned_bins_is_binned_mass() {
        let coarse = [0.0, 1.0, 2.0];
        let fine = [0.0, 0.5, 1.0, 1.5, 2.0];
        let w = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(outer_bound(&coarse, &fine, &w), vec![0.1 + 0.2, 0.3 + 0.4]);
        // Straddling fine bin counts for both neighbours.
        let fine = [0.0, 0.5, 1.5, 2.0];
        let w = [0.1, 0.5, 0.4];
        assert_eq!(outer_bound(&coarse, &fine, &w), vec![0.6, 0.9]);
    }
}
