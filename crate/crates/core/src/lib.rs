//! Core of the plant-disease classification toolkit.
//!
//! Everything the command-line pipeline needs lives here: dense tensors with
//! explicit forward/backward kernels, the 28-layer plant-disease CNN, the
//! RMSprop/Adam/AMSgrad update rules, the image preprocessing chain, dataset
//! handling and the evaluation metrics.

pub mod checkpoint;
pub mod data;
mod error;
pub mod imgproc;
pub mod metrics;
pub mod network;
pub mod optim;
mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Element, Padding, Precision, Tensor};
