//! Minimal dense-tensor kernel: just enough to train the equalizer without
//! any ML framework. Two layer types (LSTM cell, 1-D convolution), each with
//! a hand-written backward pass, plus Adam.

mod act;
mod adam;
mod checkpoint;
mod conv;
mod init;
mod lstm;
mod tensor;

pub use act::Activation;
pub use adam::{AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use conv::{conv1d_backward, conv1d_forward};
pub use init::glorot_uniform;
pub use lstm::{lstm_cell_backward, lstm_cell_forward, LstmCache, LstmGrads, LstmParams};
pub use tensor::Tensor;
