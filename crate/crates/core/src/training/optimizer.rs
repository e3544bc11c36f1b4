//! Adam with per-group learning rates.

use crate::field::ParamTape;

use super::config::OptimConfig;

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: OptimConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: OptimConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update using the tape's gradients, with every group's learning
    /// rate multiplied by `scale`. Groups with a zero rate are left untouched.
    pub fn step(&mut self, tape: &mut ParamTape, scale: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let groups = tape.groups().to_vec();
        let grads = tape.grads().to_vec();
        let params = tape.params_mut();
        for g in groups {
            let lr = self.config.lr_for(g.kind) * scale;
            if lr == 0.0 {
                continue;
            }
            for i in g.range() {
                let gi = grads[i];
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * gi;
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * gi * gi;
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
