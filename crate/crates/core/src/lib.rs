//! PeriodNet: period-based attention forecasting, from tensors to training.
//!
//! The math core (`tensor`, `attention`, `grouping`, `model`) is generic over
//! the scalar type; the harness (`data`, `train`, `checkpoint`) works in f64,
//! which is also what the checkpoint format stores.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod grouping;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{finite_diff_check, AdamState, Tensor};

/// Default-precision tensor; what the training harness uses.
pub type Tensor64 = Tensor<f64>;
/// Single-precision variant of the same engine.
pub type Tensor32 = Tensor<f32>;
