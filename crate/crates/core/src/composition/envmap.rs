use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::wrap_pi;

/// Default number of lobes per map.
pub const DEFAULT_LOBES: usize = 50;
/// Learnable scalars per lobe: `p (2), c (3), α, s (2)`.
pub const LOBE_PARAMS: usize = 8;
const MIN_WIDTH: f64 = 1e-3;

/// One lobe `c·α·exp(−½‖(x − p)/s‖²)` in longitude/latitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub p: [f64; 2],
    pub c: [f64; 3],
    pub alpha: f64,
    pub s: [f64; 2],
}

impl Gaussian {
    /// Lobe centered on a world direction.
    pub fn toward(dir: &Vector3<f64>, c: [f64; 3], alpha: f64, s: [f64; 2]) -> Self {
        Self {
            p: lat_long(dir),
            c,
            alpha,
            s,
        }
    }

    pub fn direction(&self) -> Vector3<f64> {
        from_lat_long(self.p)
    }

    #[inline]
    fn falloff(&self, ll: [f64; 2]) -> (f64, f64, f64) {
        let dl = wrap_pi(ll[0] - self.p[0]);
        let dt = ll[1] - self.p[1];
        let g = (-0.5 * ((dl / self.s[0]).powi(2) + (dt / self.s[1]).powi(2))).exp();
        (g, dl, dt)
    }
}

/// `(longitude, latitude)` of a unit direction; `z` is up.
pub fn lat_long(dir: &Vector3<f64>) -> [f64; 2] {
    [dir.y.atan2(dir.x), dir.z.clamp(-1.0, 1.0).asin()]
}

pub fn from_lat_long(p: [f64; 2]) -> Vector3<f64> {
    let (sl, cl) = p[0].sin_cos();
    let (st, ct) = p[1].sin_cos();
    Vector3::new(ct * cl, ct * sl, st)
}

/// Mixture-of-Gaussians environment map over longitude/latitude.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvMap {
    pub lobes: Vec<Gaussian>,
}

impl EnvMap {
    pub fn new(lobes: Vec<Gaussian>) -> Self {
        Self { lobes }
    }

    /// `n` lobes spread over the sphere with random colors, amplitude
    /// `amplitude / n` and width `width`.
    pub fn random(n: usize, amplitude: f64, width: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lobes = (0..n)
            .map(|_| Gaussian {
                p: [rng.gen_range(-PI..PI), rng.gen_range(-1.0f64..1.0).asin()],
                c: [
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.5..1.0),
                ],
                alpha: amplitude / n.max(1) as f64,
                s: [width, width],
            })
            .collect();
        Self { lobes }
    }

    /// Constant radiance everywhere (one lobe wider than the sphere).
    pub fn constant(c: [f64; 3]) -> Self {
        Self {
            lobes: vec![Gaussian {
                p: [0.0, 0.0],
                c,
                alpha: 1.0,
                s: [1e6, 1e6],
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.lobes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lobes.is_empty()
    }

    /// Unclamped mixture sum.
    pub fn eval_raw(&self, dir: &Vector3<f64>) -> [f64; 3] {
        let ll = lat_long(dir);
        let mut out = [0.0; 3];
        for g in &self.lobes {
            let (f, _, _) = g.falloff(ll);
            for (o, c) in out.iter_mut().zip(g.c) {
                *o += c * g.alpha * f;
            }
        }
        out
    }

    /// Radiance toward `dir`, clamped at zero.
    pub fn eval(&self, dir: &Vector3<f64>) -> [f64; 3] {
        self.eval_raw(dir).map(|v| v.max(0.0))
    }

    /// Accumulate `∂(d_out · eval_raw(dir))/∂θ` into `grads` (flattened
    /// layout of [`EnvMap::params`]).
    pub fn grad_raw(&self, dir: &Vector3<f64>, d_out: [f64; 3], grads: &mut [f64]) {
        let ll = lat_long(dir);
        for (g, gr) in self.lobes.iter().zip(grads.chunks_exact_mut(LOBE_PARAMS)) {
            let (f, dl, dt) = g.falloff(ll);
            if f == 0.0 {
                continue;
            }
            let dc: f64 = (0..3).map(|k| d_out[k] * g.c[k]).sum();
            let amp = g.alpha * f * dc;
            gr[0] += amp * dl / (g.s[0] * g.s[0]);
            gr[1] += amp * dt / (g.s[1] * g.s[1]);
            for k in 0..3 {
                gr[2 + k] += d_out[k] * g.alpha * f;
            }
            gr[5] += f * dc;
            gr[6] += amp * dl * dl / g.s[0].powi(3);
            gr[7] += amp * dt * dt / g.s[1].powi(3);
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.lobes
            .iter()
            .flat_map(|g| {
                [
                    g.p[0], g.p[1], g.c[0], g.c[1], g.c[2], g.alpha, g.s[0], g.s[1],
                ]
            })
            .collect()
    }

    /// Inverse of [`EnvMap::params`]; colors are clamped non-negative and
    /// widths kept above a small floor.
    pub fn set_params(&mut self, v: &[f64]) {
        for (g, p) in self.lobes.iter_mut().zip(v.chunks_exact(LOBE_PARAMS)) {
            g.p = [p[0], p[1]];
            g.c = [p[2].max(0.0), p[3].max(0.0), p[4].max(0.0)];
            g.alpha = p[5];
            g.s = [p[6].abs().max(MIN_WIDTH), p[7].abs().max(MIN_WIDTH)];
        }
    }

    /// Center direction of the lobe with the largest peak `α·mean(c)`.
    pub fn dominant_direction(&self) -> Option<Vector3<f64>> {
        self.lobes
            .iter()
            .max_by(|a, b| {
                let pa = a.alpha * a.c.iter().sum::<f64>();
                let pb = b.alpha * b.c.iter().sum::<f64>();
                pa.total_cmp(&pb)
            })
            .map(Gaussian::direction)
    }
}

/// Unclamped sum of several maps, clamped at zero.
pub fn eval_sum(maps: &[&EnvMap], dir: &Vector3<f64>) -> [f64; 3] {
    let mut out = [0.0; 3];
    for m in maps {
        let v = m.eval_raw(dir);
        for k in 0..3 {
            out[k] += v[k];
        }
    }
    out.map(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lobe() -> Gaussian {
        Gaussian {
            p: [0.4, 0.3],
            c: [0.2, 0.5, 0.9],
            alpha: 2.0,
            s: [0.2, 0.1],
        }
    }

    #[test]
    fn peak_value_is_color_times_amplitude() {
        let g = lobe();
        let m = EnvMap::new(vec![g]);
        let v = m.eval(&g.direction());
        for k in 0..3 {
            assert!((v[k] - g.c[k] * g.alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn far_queries_decay() {
        let g = lobe();
        let m = EnvMap::new(vec![g]);
        let v = m.eval(&from_lat_long([g.p[0], g.p[1] + 6.0 * g.s[1]]));
        let w = m.eval(&from_lat_long([g.p[0] + 6.0 * g.s[0], g.p[1]]));
        for k in 0..3 {
            assert!(v[k] < 1e-7 * g.c[k] * g.alpha);
            assert!(w[k] < 1e-7 * g.c[k] * g.alpha);
        }
    }

    #[test]
    fn mixture_is_linear() {
        let a = lobe();
        let mut b = lobe();
        b.p = [-2.0, -0.2];
        b.s = [0.8, 0.5];
        let both = EnvMap::new(vec![a, b]);
        let d = Vector3::new(0.3, -0.5, 0.2).normalize();
        let (va, vb, vab) = (
            EnvMap::new(vec![a]).eval(&d),
            EnvMap::new(vec![b]).eval(&d),
            both.eval(&d),
        );
        for k in 0..3 {
            assert!((vab[k] - va[k] - vb[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn longitude_wraps() {
        let mut g = lobe();
        g.p[0] = 3.1;
        let d = from_lat_long([-3.1, 0.3]);
        let near = EnvMap::new(vec![g]).eval(&d)[0];
        assert!(near > 0.1 * g.c[0] * g.alpha, "{near}");
        let mut shifted = g;
        shifted.p[0] += 2.0 * PI;
        let v = EnvMap::new(vec![shifted]).eval(&d)[0];
        assert!((v - near).abs() < 1e-12);
    }

    #[test]
    fn negative_sums_clamp_to_zero() {
        let mut g = lobe();
        g.alpha = -1.0;
        let m = EnvMap::new(vec![g]);
        assert_eq!(m.eval(&g.direction()), [0.0; 3]);
        assert!(m.eval_raw(&g.direction())[0] < 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut b = lobe();
        b.p = [0.7, 0.1];
        let m = EnvMap::new(vec![lobe(), b]);
        let d = Vector3::new(0.8, 0.5, 0.25).normalize();
        let w = [0.3, -1.2, 0.7];
        let f = |m: &EnvMap| -> f64 { m.eval_raw(&d).iter().zip(w).map(|(a, b)| a * b).sum() };
        let mut g = vec![0.0; m.params().len()];
        m.grad_raw(&d, w, &mut g);
        let p0 = m.params();
        for i in 0..p0.len() {
            let eps = 1e-6;
            let mut mp = m.clone();
            let mut p = p0.clone();
            p[i] += eps;
            mp.set_params(&p);
            let fp = f(&mp);
            p[i] -= 2.0 * eps;
            mp.set_params(&p);
            let fm = f(&mp);
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn params_round_trip_and_dominant_direction() {
        let mut m = EnvMap::random(DEFAULT_LOBES, 3.0, 0.3, 7);
        assert_eq!(m.len(), 50);
        let p = m.params();
        m.set_params(&p);
        assert_eq!(m.params(), p);
        let mut strong = lobe();
        strong.alpha = 100.0;
        m.lobes.push(strong);
        assert!((m.dominant_direction().unwrap() - strong.direction()).norm() < 1e-12);
    }
}
