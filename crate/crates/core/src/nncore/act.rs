//! Scalar activation used by the layers: exact function or PWL replacement.

use crate::activation::{sigmoid, ActivationKind, PwlSpec};

/// A scalar activation with a matching derivative, expressed in terms of the
/// pre-activation input (not the output), so exact and PWL variants are
/// interchangeable inside forward/backward passes.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Exact(ActivationKind),
    Pwl(PwlSpec),
}

impl Activation {
    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match self {
            Activation::Exact(ActivationKind::Sigmoid) => sigmoid(x),
            Activation::Exact(ActivationKind::Tanh) => x.tanh(),
            Activation::Pwl(spec) => spec.eval(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Exact(ActivationKind::Sigmoid) => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Exact(ActivationKind::Tanh) => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Pwl(spec) => spec.grad(x),
        }
    }

    /// Whether `x` falls in a zero-slope tail segment. Exact activations
    /// have no tails.
    #[inline]
    pub fn in_tail(&self, x: f64) -> bool {
        match self {
            Activation::Exact(_) => false,
            Activation::Pwl(spec) => spec.grad(x) == 0.0,
        }
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Exact(k) => *k,
            Activation::Pwl(spec) => spec.kind(),
        }
    }

    pub fn is_pwl(&self) -> bool {
        matches!(self, Activation::Pwl(_))
    }
}
