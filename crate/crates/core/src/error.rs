// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("matrix data is invalid: {0}")]
    InvalidMatrix(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("prompt text is empty")]
    EmptyPrompt,

    #[error("token {0:?} is not in the vocabulary and no fallback token is configured")]
    OutOfVocabulary(String),

    #[error("token id {id} is outside the vocabulary (size {size})")]
    TokenIdOutOfRange { id: u32, size: usize },

    #[error("malformed delay schedule: {0}")]
    Schedule(String),

    #[error("token grid is invalid: {0}")]
    InvalidGrid(String),

    #[error("hook returned a {got_rows}x{got_cols} map at step {step}, layer {layer}; expected {want_rows}x{want_cols}")]
    HookShape {
        step: usize,
        layer: usize,
        want_rows: usize,
        want_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("edit precondition violated: {0}")]
    EditPrecondition(String),

    #[error("metric input invalid: {0}")]
    Metric(String),

    #[error("dataset line {line}: {message}")]
    DatasetLine { line: usize, message: String },

    #[error("prompt pair {id:?}: {message}")]
    InvalidPair { id: String, message: String },

    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DimensionMismatch { .. } => "dimension_mismatch",
            Self::InvalidMatrix(_) => "invalid_matrix",
            Self::InvalidDistribution(_) => "invalid_distribution",
            Self::InvalidConfig(_) => "invalid_config",
            Self::EmptyPrompt => "empty_prompt",
            Self::OutOfVocabulary(_) => "out_of_vocabulary",
            Self::TokenIdOutOfRange { .. } => "token_id_out_of_range",
            Self::Schedule(_) => "schedule",
            Self::InvalidGrid(_) => "invalid_grid",
            Self::HookShape { .. } => "hook_shape",
            Self::EditPrecondition(_) => "edit_precondition",
            Self::Metric(_) => "metric",
            Self::DatasetLine { .. } => "dataset_line",
            Self::InvalidPair { .. } => "invalid_pair",
            Self::ConfigLine { .. } => "config_line",
            Self::Io { .. } => "io",
            Self::Json(_) => "json",
            Self::Parse(_) => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
