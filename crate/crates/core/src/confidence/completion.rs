//! Edge-aware sparse-to-dense depth propagation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lidar::SparseDepth;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub k: usize,
    /// Spatial bandwidth in pixels.
    pub sigma_s: f64,
    /// Color bandwidth on the guide image.
    pub sigma_c: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            k: 8,
            sigma_s: 16.0,
            sigma_c: 0.1,
        }
    }
}

/// Fill every pixel from its `k` nearest samples weighted by
/// `exp(−‖Δpx‖²/2σ_s²)·exp(−‖ΔI‖²/2σ_c²)`. Sample pixels keep their value.
pub fn complete_depth(
    sparse: &SparseDepth,
    guide: &Image,
    cfg: &CompletionConfig,
) -> Result<Image> {
    let (w, h) = (sparse.depth.width(), sparse.depth.height());
    if guide.width() != w || guide.height() != h {
        return Err(Error::ShapeMismatch(
            "guide image does not match sparse depth".into(),
        ));
    }
    if sparse.count() == 0 {
        return Err(Error::NoDepthSamples);
    }
    let k = cfg.k.max(1);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(4 * k);
            (0..w)
                .map(|x| {
                    if *sparse.valid.get(x, y) {
                        return sparse.depth.at(x, y, 0);
                    }
                    nearest(sparse, x, y, k, &mut cand);
                    let gp = guide.pixel(x, y);
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &(d2, sx, sy) in cand.iter() {
                        let gq = guide.pixel(sx, sy);
                        let c2: f64 = gp.iter().zip(gq).map(|(a, b)| (a - b) * (a - b)).sum();
                        let wgt = (-d2 / (2.0 * cfg.sigma_s * cfg.sigma_s)
                            - c2 / (2.0 * cfg.sigma_c * cfg.sigma_c))
                            .exp();
                        num += wgt * sparse.depth.at(sx, sy, 0);
                        den += wgt;
                    }
                    if den > 1e-300 {
                        num / den
                    } else {
                        let (_, sx, sy) = cand[0];
                        sparse.depth.at(sx, sy, 0)
                    }
                })
                .collect()
        })
        .collect();
    Image::from_vec(w, h, 1, rows.into_iter().flatten().collect())
}

/// The `k` samples nearest to `(x, y)` by Euclidean pixel distance, sorted,
/// ties broken by scan order. Searches square rings outward.
fn nearest(s: &SparseDepth, x: usize, y: usize, k: usize, out: &mut Vec<(f64, usize, usize)>) {
    out.clear();
    let (w, h) = (s.depth.width() as isize, s.depth.height() as isize);
    let (x, y) = (x as isize, y as isize);
    let max_r = w.max(h);
    for r in 0..=max_r {
        if out.len() >= k {
            let kth = out[k - 1].0;
            if (r * r) as f64 > kth {
                break;
            }
        }
        let mut visit = |px: isize, py: isize| {
            if px >= 0 && py >= 0 && px < w && py < h && *s.valid.get(px as usize, py as usize) {
                let d2 = ((px - x) * (px - x) + (py - y) * (py - y)) as f64;
                out.push((d2, px as usize, py as usize));
            }
        };
        if r == 0 {
            visit(x, y);
        } else {
            for dx in -r..=r {
                visit(x + dx, y - r);
                visit(x + dx, y + r);
            }
            for dy in (-r + 1)..r {
                visit(x - r, y + dy);
                visit(x + r, y + dy);
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
        out.truncate(k.max(1) * 4);
    }
    out.truncate(k);
}
