//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("outcome column '{name}' is constant (sd = 0); no association analysis is meaningful for it")]
    ConstantOutcome { name: String },

    #[error("fold count {k} is invalid for {n} observations (need 2 <= K <= n{})",
            if *reuse { ", and K >= 4 with fit reuse" } else { "" })]
    BadFoldCount { k: usize, n: usize, reuse: bool },

    #[error("null mean squared-error is not positive ({mse_null}); ratio undefined")]
    DegenerateNull { mse_null: f64 },

    #[error("input has {got} entries but the predictor expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameter for {kind}: {detail}")]
    InvalidHyperparameter { kind: String, detail: String },

    #[error("singular fit for {kind}: {detail}")]
    SingularFit { kind: String, detail: String },

    #[error("optimizer failed to converge: {0}")]
    OptimizerFailure(String),

    #[error("singular cross-product matrix: {0}")]
    SingularMatrix(String),

    #[error("importance group covers every covariate; the reduced model would have none left")]
    EmptyComplement,

    #[error("missing outcome value in column '{name}', row {row}")]
    MissingOutcome { name: String, row: usize },

    #[error("non-finite value in {place}, row {row}")]
    NonFinite { place: String, row: usize },

    #[error("too few observations: {detail}")]
    TooFewObservations { detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("learner {learner} failed on outcome {outcome}, fold {fold}: {source}")]
    LearnerFit {
        learner: String,
        outcome: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
