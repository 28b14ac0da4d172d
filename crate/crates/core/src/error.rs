use chrono::NaiveDate;
use thiserror::Error;

use crate::dataset::MarginIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in ingestion, fitting, sampling and scoring.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("degenerate climatology for margin {0}: zero variance")]
    DegenerateClimatology(MarginIndex),

    #[error("unknown margin {0}")]
    UnknownMargin(MarginIndex),

    #[error("insufficient training data before {target}: {available} instances available, {required} required")]
    InsufficientTraining {
        target: NaiveDate,
        available: usize,
        required: usize,
    },

    #[error("insufficient history: {available} observations available, {required} required")]
    InsufficientHistory { available: usize, required: usize },

    #[error("degenerate training set: {0}")]
    DegenerateFit(String),

    #[error("optimizer did not converge after {iterations} iterations (best objective {objective})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        /// Best parameters found, in the natural (not reparameterized) form.
        best: Vec<f64>,
    },

    #[error("degenerate predictive distribution: {0}")]
    DegeneratePredictive(String),

    #[error("rejection acceptance probability {acceptance:.3e} is below threshold {threshold:.1e}")]
    LowAcceptance { acceptance: f64, threshold: f64 },

    #[error("sampling failed for case {case}: {source}")]
    Sampling {
        case: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("histograms cannot be combined: {0}")]
    Aggregation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
