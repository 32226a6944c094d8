//! Convolutional classifier with exact per-example gradients.

mod checkpoint;
mod gradcheck;
pub(crate) mod layers;
mod model;
mod samples;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{central_difference, finite_difference_gradient};
pub use model::{
    ExampleCache, ForwardCache, LayerKind, ModelConfig, ModelParams, ParamSet, ParamSpec,
};
pub use samples::Samples;
pub(crate) use samples::argmax;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("malformed checkpoint at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
