//! Perception and geometry confidence maps and their learnable blend.

use serde::{Deserialize, Serialize};

use super::ssim::ssim_map;
use crate::error::{Error, Result};
use crate::geometry::WarpField;
use crate::image::Image;

pub const DEFAULT_TAU: f64 = 0.2;
pub const N_MAPS: usize = 5;
pub const MAP_NAMES: [&str; N_MAPS] = ["rgb", "ssim", "feat", "depth", "flow"];

/// `γ(x) = 1 − x/τ` for `x < τ`, else 0.
pub fn gamma(x: f64, tau: f64) -> f64 {
    if x >= tau {
        0.0
    } else {
        1.0 - x / tau
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionMaps {
    pub rgb: Image,
    pub ssim: Image,
    pub feat: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryMaps {
    pub depth: Image,
    pub flow: Image,
}

fn check_dims(a: &Image, w: usize, h: usize, what: &str) -> Result<()> {
    if a.width() != w || a.height() != h {
        return Err(Error::ShapeMismatch(format!(
            "{what} is {}x{}, expected {w}x{h}",
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

/// Compare the source view with the target view inverse-warped onto it.
/// Pixels whose warp is invalid get 0 in every map.
pub fn perception_confidence(
    i_s: &Image,
    i_t: &Image,
    f_s: &Image,
    f_t: &Image,
    warp: &WarpField,
) -> Result<PerceptionMaps> {
    let (w, h) = (i_s.width(), i_s.height());
    check_dims(f_s, w, h, "source features")?;
    if warp.width() != w || warp.height() != h {
        return Err(Error::ShapeMismatch(
            "warp does not match source image".into(),
        ));
    }
    if i_t.channels() != i_s.channels() || f_t.channels() != f_s.channels() {
        return Err(Error::ShapeMismatch(
            "source and target channel counts differ".into(),
        ));
    }
    let c = i_s.channels();
    let fc = f_s.channels();
    let mut warped = Image::new(w, h, c);
    let mut rgb = Image::new(w, h, 1);
    let mut feat = Image::new(w, h, 1);
    let mut fbuf = vec![0.0; fc];
    for y in 0..h {
        for x in 0..w {
            let Some(q) = warp.get(x, y) else {
                continue;
            };
            i_t.sample_bilinear(q.x, q.y, warped.pixel_mut(x, y));
            let src = i_s.pixel(x, y);
            let l1 = src
                .iter()
                .zip(warped.pixel(x, y))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / c as f64;
            rgb.set(x, y, 0, (1.0 - l1).clamp(0.0, 1.0));
            f_t.sample_bilinear(q.x, q.y, &mut fbuf);
            let dist = f_s
                .pixel(x, y)
                .iter()
                .zip(&fbuf)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            feat.set(x, y, 0, (1.0 - dist).clamp(0.0, 1.0));
        }
    }
    let mut ssim = ssim_map(&i_s.to_gray(), &warped.to_gray())?;
    for y in 0..h {
        for x in 0..w {
            let v = if warp.get(x, y).is_some() {
                ssim.at(x, y, 0).clamp(0.0, 1.0)
            } else {
                0.0
            };
            ssim.set(x, y, 0, v);
        }
    }
    Ok(PerceptionMaps { rgb, ssim, feat })
}

/// Depth and flow consistency of the warp built from the source depth
/// `d_s` against the target depth `d_t` and observed flow `flow`
/// (2 channels, source→target pixels).
pub fn geometry_confidence(
    d_s: &Image,
    d_t: &Image,
    flow: &Image,
    warp: &WarpField,
    tau: f64,
) -> Result<GeometryMaps> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must be in (0, 1], got {tau}")));
    }
    let (w, h) = (d_s.width(), d_s.height());
    check_dims(flow, w, h, "flow")?;
    if flow.channels() != 2 {
        return Err(Error::ShapeMismatch("flow needs 2 channels".into()));
    }
    if warp.width() != w || warp.height() != h {
        return Err(Error::ShapeMismatch(
            "warp does not match source depth".into(),
        ));
    }
    let mut depth = Image::new(w, h, 1);
    let mut fl = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let Some(q) = warp.get(x, y) else {
                continue;
            };
            let ds = d_s.at(x, y, 0);
            let dt = d_t.sample_bilinear_scalar(q.x, q.y);
            depth.set(x, y, 0, gamma((q.d - dt).abs() / ds, tau));
            let (dx, dy) = (q.x - x as f64, q.y - y as f64);
            let (fx, fy) = (flow.at(x, y, 0), flow.at(x, y, 1));
            let dn = dx.hypot(dy);
            let c = if !(fx.is_finite() && fy.is_finite()) {
                0.0
            } else if dn < 1e-3 {
                if fx.hypot(fy) < 1e-3 {
                    1.0
                } else {
                    0.0
                }
            } else {
                gamma((dx - fx).hypot(dy - fy) / dn, tau)
            };
            fl.set(x, y, 0, c);
        }
    }
    Ok(GeometryMaps { depth, flow: fl })
}

/// Five confidence maps and their blend logits `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidencePack {
    /// `C_rgb, C_ssim, C_feat, C_depth, C_flow`.
    pub maps: [Image; N_MAPS],
    pub omega: [f64; N_MAPS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

impl ConfidencePack {
    pub fn new(p: PerceptionMaps, g: GeometryMaps) -> Self {
        Self {
            maps: [p.rgb, p.ssim, p.feat, g.depth, g.flow],
            omega: [0.0; N_MAPS],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.omega)
    }

    pub fn report(&self) -> OmegaReport {
        OmegaReport {
            names: MAP_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: self.weights(),
        }
    }

    /// The five map values at one pixel.
    pub fn at(&self, x: usize, y: usize) -> [f64; N_MAPS] {
        std::array::from_fn(|i| self.maps[i].at(x, y, 0))
    }
}

/// `Ĉ = Σ softmax(ω)_i C_i`.
pub fn combine_confidence(pack: &ConfidencePack) -> Image {
    let wts = pack.weights();
    let m = &pack.maps[0];
    Image::from_fn(m.width(), m.height(), 1, |x, y, _| {
        pack.maps
            .iter()
            .zip(&wts)
            .map(|(c, w)| w * c.at(x, y, 0))
            .sum()
    })
}

/// Gradient of a loss w.r.t. `ω` given `∂L/∂Ĉ_p` for a set of per-pixel
/// map values: `∂Ĉ/∂ω_j = s_j (C_j − Ĉ)`.
pub fn combine_backward(
    omega: &[f64; N_MAPS],
    values: &[[f64; N_MAPS]],
    d_chat: &[f64],
    d_omega: &mut [f64],
) {
    let s = softmax(omega);
    for (v, &g) in values.iter().zip(d_chat) {
        let chat: f64 = v.iter().zip(&s).map(|(a, b)| a * b).sum();
        for j in 0..N_MAPS {
            d_omega[j] += g * s[j] * (v[j] - chat);
        }
    }
}
