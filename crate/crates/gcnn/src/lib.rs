//! Hierarchical graph convolutional network for per-face machining feature
//! classification: convolutions over mesh facets, pooling into B-Rep faces,
//! convolutions over faces, and a softmax head. Gradients are written out
//! by hand.

pub mod batch;
pub mod checkpoint;
pub mod layer;
pub mod matrix;
pub mod model;
pub mod train;

use thiserror::Error;

pub use batch::{Level, PackedBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use matrix::{xavier_init, Matrix};
pub use model::{cross_entropy, softmax_row, Mode, ModelConfig, Network, StepResult};
pub use train::{face_accuracy, train, Adam, EpochLog, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum GcnnError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("non-finite values in {0}")]
    Numeric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
