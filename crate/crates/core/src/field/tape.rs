use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a parameter group holds; the optimizer picks learning rates by kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupKind {
    Grid,
    Mlp,
    Confidence,
    PoseOffset,
    TrackOffset,
    Lighting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub kind: GroupKind,
    pub start: usize,
    pub len: usize,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// A scalar function of the flat parameter vector with a hand-written
/// reverse pass. `backward` accumulates into `grads`.
pub trait Objective {
    fn forward(&mut self, params: &[f64]) -> f64;
    fn backward(&self, params: &[f64], grads: &mut [f64]);
}

/// Flat parameter vector with an equally sized gradient vector.
#[derive(Clone, Debug, Default)]
pub struct ParamTape {
    params: Vec<f64>,
    grads: Vec<f64>,
    groups: Vec<ParamGroup>,
    recorded: bool,
}

impl ParamTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named group initialised from `values`; returns its offset.
    pub fn alloc(&mut self, name: impl Into<String>, kind: GroupKind, values: Vec<f64>) -> usize {
        let start = self.params.len();
        self.groups.push(ParamGroup {
            name: name.into(),
            kind,
            start,
            len: values.len(),
        });
        self.grads.resize(start + values.len(), 0.0);
        self.params.extend(values);
        start
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Parameters and gradients borrowed together.
    pub fn split_mut(&mut self) -> (&[f64], &mut [f64]) {
        (&self.params, &mut self.grads)
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a tape of {}",
                values.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(values);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.recorded = false;
    }

    /// Evaluate `obj` and mark the pass as recorded.
    pub fn forward<O: Objective + ?Sized>(&mut self, obj: &mut O) -> f64 {
        let v = obj.forward(&self.params);
        self.recorded = true;
        v
    }

    /// Accumulate gradients of the last recorded forward pass.
    pub fn backward<O: Objective + ?Sized>(&mut self, obj: &O) -> Result<()> {
        if !self.recorded {
            return Err(Error::NoForwardPass);
        }
        obj.backward(&self.params, &mut self.grads);
        self.recorded = false;
        Ok(())
    }

    /// Mark externally accumulated gradients as belonging to a forward pass
    /// (used by the batched trainer, which reduces worker gradients itself).
    pub(crate) fn mark_recorded(&mut self) {
        self.recorded = true;
    }

    pub(crate) fn take_recorded(&mut self) -> Result<()> {
        if !self.recorded {
            return Err(Error::NoForwardPass);
        }
        self.recorded = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl Objective for Constant {
        fn forward(&mut self, _: &[f64]) -> f64 {
            3.5
        }
        fn backward(&self, _: &[f64], _: &mut [f64]) {}
    }

    struct HalfNorm;
    impl Objective for HalfNorm {
        fn forward(&mut self, p: &[f64]) -> f64 {
            0.5 * p.iter().map(|v| v * v).sum::<f64>()
        }
        fn backward(&self, p: &[f64], g: &mut [f64]) {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += pi;
            }
        }
    }

    fn tape() -> ParamTape {
        let mut t = ParamTape::new();
        t.alloc("a", GroupKind::Mlp, vec![1.0, -2.0]);
        t.alloc("b", GroupKind::Grid, vec![0.5, 3.0, 4.0]);
        t
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut t = tape();
        t.forward(&mut Constant);
        t.backward(&Constant).unwrap();
        assert!(t.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn half_norm_gradient_is_theta() {
        let mut t = tape();
        let v = t.forward(&mut HalfNorm);
        assert_eq!(v, 0.5 * (1.0 + 4.0 + 0.25 + 9.0 + 16.0));
        t.backward(&HalfNorm).unwrap();
        assert_eq!(t.grads(), t.params());
        assert_eq!(t.grads().len(), t.params().len());
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut t = tape();
        assert!(matches!(t.backward(&HalfNorm), Err(Error::NoForwardPass)));
        t.forward(&mut HalfNorm);
        t.backward(&HalfNorm).unwrap();
        // A pass can only be consumed once.
        assert!(matches!(t.backward(&HalfNorm), Err(Error::NoForwardPass)));
    }

    #[test]
    fn zero_grad_resets() {
        let mut t = tape();
        t.forward(&mut HalfNorm);
        t.backward(&HalfNorm).unwrap();
        t.zero_grad();
        assert!(t.grads().iter().all(|&g| g == 0.0));
        assert_eq!(t.group("b").unwrap().range(), 2..5);
    }
}
