//! Fully connected ReLU network stored in a [`ParamTape`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{GroupKind, ParamTape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    relu_last: bool,
}

impl Mlp {
    /// Layer widths `dims[0] → … → dims[n]`. Hidden layers use ReLU; the last
    /// layer does too when `relu_last` is set. With `zero` every weight and
    /// bias starts at 0, otherwise He-uniform weights and zero biases.
    pub fn new(
        dims: &[usize],
        relu_last: bool,
        zero: bool,
        name: &str,
        tape: &mut ParamTape,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut values = Vec::with_capacity(fan_in * fan_out + fan_out);
            for _ in 0..fan_in * fan_out {
                values.push(if zero {
                    0.0
                } else {
                    rng.gen_range(-bound..bound)
                });
            }
            values.resize(fan_in * fan_out + fan_out, 0.0);
            offsets.push(tape.alloc(format!("{name}.layer{l}"), GroupKind::Mlp, values));
        }
        Self {
            dims: dims.to_vec(),
            offsets,
            relu_last,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Length of the activation buffer used by [`forward`](Self::forward).
    pub fn acts_len(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        let l = self.dims.len() - 1;
        self.offsets[0]..self.offsets[l - 1] + self.dims[l - 1] * self.dims[l] + self.dims[l]
    }

    /// `acts` must hold the input in its first `input_dim` entries; every
    /// layer's (post-activation) output is written after it. Returns the
    /// offset of the output in `acts`.
    pub fn forward(&self, params: &[f64], acts: &mut [f64]) -> usize {
        let layers = self.dims.len() - 1;
        let mut at = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let relu = l + 1 < layers || self.relu_last;
            let (head, tail) = acts.split_at_mut(at + n_in);
            let x = &head[at..];
            let w = &params[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &params[self.offsets[l] + n_in * n_out..self.offsets[l] + n_in * n_out + n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    s += wi * xi;
                }
                tail[o] = if relu { s.max(0.0) } else { s };
            }
            at += n_in;
        }
        at
    }

    /// Reverse pass given the activations of a forward pass. `d_out` is
    /// consumed as scratch. Writes `∂/∂input` into `d_input` when given.
    pub fn backward(
        &self,
        params: &[f64],
        acts: &[f64],
        d_out: &[f64],
        grads: &mut [f64],
        d_input: Option<&mut [f64]>,
    ) {
        let layers = self.dims.len() - 1;
        let max_w = *self.dims.iter().max().unwrap();
        let mut g = vec![0.0; max_w];
        let mut g_prev = vec![0.0; max_w];
        g[..d_out.len()].copy_from_slice(d_out);
        let mut at = self.acts_len() - self.output_dim();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let relu = l + 1 < layers || self.relu_last;
            let y = &acts[at..at + n_out];
            at -= n_in;
            let x = &acts[at..at + n_in];
            if relu {
                for (gi, &yi) in g[..n_out].iter_mut().zip(y) {
                    if yi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            let w_off = self.offsets[l];
            let b_off = w_off + n_in * n_out;
            let need_input = l > 0 || d_input.is_some();
            g_prev[..n_in].iter_mut().for_each(|v| *v = 0.0);
            for o in 0..n_out {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                grads[b_off + o] += go;
                let gw = &mut grads[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (gwi, xi) in gw.iter_mut().zip(x) {
                    *gwi += go * xi;
                }
                if need_input {
                    let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (gp, wi) in g_prev[..n_in].iter_mut().zip(row) {
                        *gp += go * wi;
                    }
                }
            }
            std::mem::swap(&mut g, &mut g_prev);
        }
        if let Some(d) = d_input {
            d.copy_from_slice(&g[..self.dims[0]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_init_outputs_zero() {
        let mut tape = ParamTape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&[3, 8, 2], false, true, "m", &mut tape, &mut rng);
        let mut acts = vec![0.0; m.acts_len()];
        acts[..3].copy_from_slice(&[0.3, -1.0, 2.0]);
        let at = m.forward(tape.params(), &mut acts);
        assert_eq!(&acts[at..], &[0.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut tape = ParamTape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mlp::new(&[4, 16, 16, 3], true, false, "m", &mut tape, &mut rng);
        for v in tape.params_mut() {
            *v += 0.05;
        }
        let input = [0.2, -0.7, 0.9, 0.4];
        let d_out = [0.5, -1.2, 0.8];
        let eval = |p: &[f64], x: &[f64]| {
            let mut acts = vec![0.0; m.acts_len()];
            acts[..4].copy_from_slice(x);
            let at = m.forward(p, &mut acts);
            acts[at..]
                .iter()
                .zip(&d_out)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let params = tape.params().to_vec();
        let mut acts = vec![0.0; m.acts_len()];
        acts[..4].copy_from_slice(&input);
        m.forward(&params, &mut acts);
        let mut grads = vec![0.0; params.len()];
        let mut d_in = [0.0; 4];
        m.backward(&params, &acts, &d_out, &mut grads, Some(&mut d_in));
        let eps = 1e-6;
        for i in (0..params.len()).step_by(7) {
            let mut pp = params.clone();
            pp[i] += eps;
            let mut pm = params.clone();
            pm[i] -= eps;
            let fd = (eval(&pp, &input) - eval(&pm, &input)) / (2.0 * eps);
            assert!(
                (fd - grads[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grads[i]
            );
        }
        for k in 0..4 {
            let mut xp = input;
            xp[k] += eps;
            let mut xm = input;
            xm[k] -= eps;
            let fd = (eval(&params, &xp) - eval(&params, &xm)) / (2.0 * eps);
            assert!((fd - d_in[k]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
