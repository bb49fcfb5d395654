//! Liquid perception workbench.
//!
//! * [`nn`]: convolution, pooling, transposed convolution, convolutional LSTM,
//!   loss and SGD with analytic backward passes.
//! * [`arch`]: single-frame, multi-frame and LSTM fully-convolutional networks
//!   for liquid detection and tracking, plus their training loop.
//! * [`simgen`]: a 2-D particle pouring simulator with a transparent-liquid
//!   renderer and occlusion-aware ground-truth labels.
//! * [`eval`]: slack-tolerant precision/recall and comparison reports.
//! * [`experiment`]: config-driven pipeline used by the command-line tool.

pub mod arch;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod nn;
pub mod simgen;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Shape, Tensor};
