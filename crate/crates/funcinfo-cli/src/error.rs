//! Error-to-exit-code policy.
//!
//! Everything the user could have typed or pointed at wrongly (flags,
//! paths, file contents, method names, dimension mismatches) is a
//! configuration error and exits 2. Everything that went wrong inside the
//! numerics (unfactorable covariances, degenerate curves, failed
//! verification checks) exits 3.

use std::fmt;

use funcinfo::covariance::CovarianceError;
use funcinfo::data::DataError;
use funcinfo::eval::EvalError;
use funcinfo::explain::ExplainError;
use funcinfo::gaussian::GaussianError;
use funcinfo::model::ModelError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing files, malformed inputs. Exit 2.
    Config(String),
    /// Failures inside the numerics. Exit 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Gaussian(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GaussianError> for CliError {
    fn from(e: GaussianError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<CovarianceError> for CliError {
    fn from(e: CovarianceError) -> Self {
        match e {
            CovarianceError::StillNotPositiveDefinite { .. } | CovarianceError::Gaussian(_) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Gaussian(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::TooFewPoints(_)
            | EvalError::NotIncreasing { .. }
            | EvalError::FractionOutOfRange(_) => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
