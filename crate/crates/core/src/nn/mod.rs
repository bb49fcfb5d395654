//! Differentiable layers with hand-written backward passes.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod deconv;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod pool;
pub mod sgd;

#[cfg(test)]
pub(crate) mod testutil;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_scalar};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
pub use deconv::{deconv_backward, deconv_forward, deconv_forward_to, DeconvGrads, DeconvParams};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, FdReport};
pub use loss::sigmoid_ce_loss;
pub use lstm::{conv_lstm_step, conv_lstm_step_backward, ConvLstmParams, Gate, LstmGrads, LstmStep};
pub use pool::{maxpool_backward, maxpool_forward, Pooled};
pub use sgd::{sgd_step, OptimizerConfig, OptimizerState};
