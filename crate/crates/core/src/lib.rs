//! Knowledge-guided transformer for time-series sales forecasting.
//!
//! A bidirectional encoder reads past statistics together with past *and*
//! future-known knowledge (price, activity flags, calendar). Unknown future
//! statistics are replaced by a learnable token. Each attention layer adds a
//! knowledge-only score matrix to the usual score matrix before the softmax,
//! and training mixes terminal-horizon masking with interior span masking.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file name the common instantiations.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod masking;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use scalar::{Precision, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape64 = tape::Tape<f64>;
pub type Aliformer32 = model::Aliformer<f32>;
pub type Aliformer64 = model::Aliformer<f64>;
pub type Window64 = data::Window<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
