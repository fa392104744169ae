//! Experiment harness: replicated learning curves, agent comparison, and the
//! cached end-to-end pipeline.

mod compare;
mod config;
mod experiment;
mod pipeline;

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use compare::{
    area_under_curve, compare_curves, episodes_to_threshold, sign_test, threshold_for, AgentSummary,
    Comparison, PairedTest,
};
pub use config::{parse_toml, AgentKind, CritiqueSchedule, DynamicsMode, ExperimentConfig, PipelineConfig};
pub use experiment::{
    load_inputs, replicate_seed, run_experiment, write_result, CritiqueSource, ExperimentInputs,
    ExperimentResult, LearningCurve, Provenance,
};
pub use pipeline::{run_pipeline, PipelineReport, StageStatus, MANIFEST};

use crate::advice::AdviceError;
use crate::env::MapError;
use crate::seq2seq::ModelError;
use crate::trainer::{DatasetError, DemoError, GrammarError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Advice(#[from] AdviceError),
    #[error("curves are not comparable: {0}")]
    GridMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
}

impl HarnessError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
