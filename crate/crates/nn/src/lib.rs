//! Minimal numerical substrate for training small sequence models on the CPU:
//! dense tensors, a reverse-mode tape, Adam, label-smoothed cross-entropy,
//! global-norm clipping and finite-difference gradient checks.

pub mod checkpoint;
pub mod clip;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use clip::{clip_global_norm, global_norm};
pub use error::{NnError, Result};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use params::{ParamId, ParamStore, Parameter};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
