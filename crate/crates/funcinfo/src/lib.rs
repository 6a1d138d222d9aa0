//! Feature attribution by Monte-Carlo estimation of gradient-information
//! scores under Gaussian perturbations.
//!
//! The crate scores input features of a differentiable classifier by how
//! much gradient information they carry when the input is perturbed with a
//! Gaussian that can reflect dependence between features. It ships the
//! sampling baselines (SmoothGrad, SmoothGradSQ, VarGrad), conditional
//! scoring of feature subsets, and a negative-perturbation evaluation
//! harness that masks low-scoring features and tracks how predictions hold
//! up.
//!
//! Modules:
//!
//! * [`gaussian`]: SPD matrices with cached Cholesky factors, multivariate
//!   Gaussian measures (sampling, conditioning, marginals, log-densities);
//! * [`model`]: differentiable decision functions with exact input
//!   gradients: a small MLP, closed-form test functions, adapters;
//! * [`covariance`]: empirical class-covariance estimation and
//!   regularization;
//! * [`explain`]: the attribution estimators and their export format;
//! * [`eval`]: masking, post-hoc accuracy and consistency curves, AUC,
//!   Spearman rank correlation;
//! * [`data`]: synthetic Gaussian class datasets and CSV round-tripping.
//!
//! Everything stochastic is keyed by an explicit `u64` seed. The generator
//! construction is fixed and documented in [`rng`], so equal seeds give
//! bit-identical results across runs and platforms.

pub mod covariance;
pub mod data;
pub mod eval;
pub mod explain;
pub mod gaussian;
pub mod model;
pub mod rng;

/// Tool identification stamped into output files by the command-line driver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToolMeta {
    /// Version of the writing tool.
    pub tool_version: String,
    /// Hash of the fully resolved run configuration.
    pub config_hash: String,
}
