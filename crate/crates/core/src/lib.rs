//! Numerical workbench for piecewise-linear (PWL) activation approximation
//! inside a biLSTM+CNN channel equalizer.
//!
//! The crate covers the full experiment loop: exact and PWL sigmoid/tanh
//! (`activation`), a small dense-tensor training kernel (`nncore`), the
//! bidirectional LSTM + 1-D convolution equalizer (`model`), a synthetic
//! dispersive nonlinear channel (`channel`), the three training regimes
//! (`training`), BER/Q-factor evaluation (`metrics`), and an
//! arithmetic-primitive hardware cost model (`hwcost`).

pub mod activation;
pub mod channel;
pub mod error;
pub mod hwcost;
pub mod metrics;
pub mod model;
pub mod nncore;
pub mod rng;
pub mod training;
pub mod util;

pub use activation::{
    eval_exact, eval_pwl, eval_pwl_fixed, fit_chord, fit_hard, fit_minimax, grad_pwl,
    max_abs_error, quantize, ActivationKind, FixedFormat, FixedValue, PwlSpec,
};
pub use channel::{build_dataset, ChannelConfig, Dataset};
pub use error::{Error, Result};
pub use metrics::{q_factor_db, QFactor, QResult};
pub use model::{ActivationSet, EqualizerParams};
pub use nncore::{Activation, AdamState, Tensor};
pub use training::{pretrain, retrain, train_scratch, TrainConfig, TrainLog};
