//! Attention encoder-decoder trained to reconstruct a local view and action
//! from a natural-language description, with exact teacher-forced scoring.

pub mod checkpoint;
mod linalg;
mod model;
mod train;
mod vocab;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use model::{Block, Encoded, Layout, ModelShape, Seq2SeqModel, StepOutput};
pub use train::{
    loss_trace_csv, token_accuracy, train, train_model, vocab_for, EpochRecord, TrainConfig,
    TrainOutcome,
};
pub use vocab::{
    action_index, cell_index, target_sequence, Vocab, TARGET_BOS, TARGET_EOS, TARGET_LEN,
    TARGET_SIZE, TARGET_TOKENS,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid checkpoint: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch}: loss or gradient is not finite")]
    Divergence { epoch: usize },
}
