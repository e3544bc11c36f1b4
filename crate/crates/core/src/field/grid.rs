//! Multiresolution feature grid over the unit cube with cone-footprint
//! downweighting of fine levels.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{GroupKind, ParamTape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub levels: usize,
    pub base_resolution: usize,
    pub growth: f64,
    pub features: usize,
    /// Levels with more vertices than `2^log2_table_size` are hashed.
    pub log2_table_size: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            base_resolution: 16,
            growth: 1.6,
            features: 2,
            log2_table_size: 19,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Level {
    res: usize,
    hashed: bool,
    entries: usize,
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEncoding {
    config: GridConfig,
    levels: Vec<Level>,
}

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];
const INV_SQRT8: f64 = 0.353_553_390_593_273_8;
const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// `erf(1 / (√8 · scale · n))`: attenuation of a level with `n` cells per
/// unit for a footprint of standard deviation `scale`.
#[inline]
pub fn downweight(scale: f64, res: f64) -> f64 {
    if scale <= 0.0 {
        return 1.0;
    }
    libm::erf(INV_SQRT8 / (scale * res))
}

#[inline]
fn downweight_with_grad(scale: f64, res: f64) -> (f64, f64) {
    if scale <= 0.0 {
        return (1.0, 0.0);
    }
    let a = INV_SQRT8 / (scale * res);
    (libm::erf(a), -TWO_OVER_SQRT_PI * (-a * a).exp() * a / scale)
}

impl GridEncoding {
    /// Lay out the grid in `tape` with small uniform initial features.
    pub fn new(config: GridConfig, name: &str, tape: &mut ParamTape, rng: &mut ChaCha8Rng) -> Self {
        let table = 1usize << config.log2_table_size;
        let mut levels = Vec::with_capacity(config.levels);
        for l in 0..config.levels {
            let res =
                (config.base_resolution as f64 * config.growth.powi(l as i32)).floor() as usize;
            let dense = (res + 1).pow(3);
            let hashed = dense > table;
            let entries = if hashed { table } else { dense };
            let values = (0..entries * config.features)
                .map(|_| rng.gen_range(-1e-4..1e-4))
                .collect();
            let offset = tape.alloc(format!("{name}.grid{l}"), GroupKind::Grid, values);
            levels.push(Level {
                res,
                hashed,
                entries,
                offset,
            });
        }
        Self { config, levels }
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.levels * self.config.features
    }

    pub fn resolutions(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.iter().map(|l| l.res)
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        let last = &self.levels[self.levels.len() - 1];
        self.levels[0].offset..last.offset + last.entries * self.config.features
    }

    #[inline]
    fn vertex_index(level: &Level, x: usize, y: usize, z: usize) -> usize {
        if level.hashed {
            let h = (x as u32).wrapping_mul(PRIMES[0])
                ^ (y as u32).wrapping_mul(PRIMES[1])
                ^ (z as u32).wrapping_mul(PRIMES[2]);
            (h as usize) & (level.entries - 1)
        } else {
            let n = level.res + 1;
            x + n * (y + n * z)
        }
    }

    /// Cell corner and fractional position of `u` (clamped to the unit cube).
    #[inline]
    fn locate(level: &Level, u: &Vector3<f64>) -> ([usize; 3], [f64; 3]) {
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        let n = level.res as f64;
        for k in 0..3 {
            let p = u[k].clamp(0.0, 1.0) * n;
            let c = (p.floor() as usize).min(level.res - 1);
            cell[k] = c;
            frac[k] = p - c as f64;
        }
        (cell, frac)
    }

    /// `out += weight · concat_l(w_l(scale) · trilerp_l(u))`.
    pub fn encode_add(
        &self,
        params: &[f64],
        u: &Vector3<f64>,
        scale: f64,
        weight: f64,
        out: &mut [f64],
    ) {
        let f = self.config.features;
        for (l, level) in self.levels.iter().enumerate() {
            let (cell, frac) = Self::locate(level, u);
            let w = weight * downweight(scale, level.res as f64);
            let o = &mut out[l * f..(l + 1) * f];
            for corner in 0..8 {
                let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                let tw = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                    * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                    * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
                let idx = Self::vertex_index(level, cell[0] + dx, cell[1] + dy, cell[2] + dz);
                let base = level.offset + idx * f;
                let cw = w * tw;
                for (k, ok) in o.iter_mut().enumerate() {
                    *ok += cw * params[base + k];
                }
            }
        }
    }

    pub fn encode(&self, params: &[f64], u: &Vector3<f64>, scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.encode_add(params, u, scale, 1.0, out);
    }

    /// Reverse pass of [`encode_add`](Self::encode_add). Accumulates into
    /// `grads` (exactly 8 vertices per level) and returns `(∂/∂u, ∂/∂scale)`.
    pub fn backward(
        &self,
        params: &[f64],
        u: &Vector3<f64>,
        scale: f64,
        weight: f64,
        d_out: &[f64],
        grads: &mut [f64],
    ) -> (Vector3<f64>, f64) {
        let f = self.config.features;
        let mut d_u = Vector3::zeros();
        let mut d_scale = 0.0;
        let inside = [
            (0.0..=1.0).contains(&u.x),
            (0.0..=1.0).contains(&u.y),
            (0.0..=1.0).contains(&u.z),
        ];
        for (l, level) in self.levels.iter().enumerate() {
            let (cell, frac) = Self::locate(level, u);
            let (dw, ddw) = downweight_with_grad(scale, level.res as f64);
            let g = &d_out[l * f..(l + 1) * f];
            let mut interp_dot = 0.0; // g · trilerp(u)
            let mut d_frac = [0.0; 3];
            for corner in 0..8 {
                let (dx, dy, dz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
                let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
                let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
                let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
                let sx = if dx == 1 { 1.0 } else { -1.0 };
                let sy = if dy == 1 { 1.0 } else { -1.0 };
                let sz = if dz == 1 { 1.0 } else { -1.0 };
                let idx = Self::vertex_index(level, cell[0] + dx, cell[1] + dy, cell[2] + dz);
                let base = level.offset + idx * f;
                let cw = weight * dw * wx * wy * wz;
                let mut gv = 0.0;
                for k in 0..f {
                    grads[base + k] += cw * g[k];
                    gv += g[k] * params[base + k];
                }
                interp_dot += wx * wy * wz * gv;
                d_frac[0] += sx * wy * wz * gv;
                d_frac[1] += wx * sy * wz * gv;
                d_frac[2] += wx * wy * sz * gv;
            }
            let n = level.res as f64;
            for k in 0..3 {
                if inside[k] {
                    d_u[k] += weight * dw * d_frac[k] * n;
                }
            }
            d_scale += weight * ddw * interp_dot;
        }
        (d_u, d_scale)
    }
}
