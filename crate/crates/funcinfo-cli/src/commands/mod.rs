//! Command implementations.

pub mod compare;
pub mod evaluate;
pub mod explain;
pub mod train;
pub mod verify;

use std::cell::RefCell;
use std::collections::HashMap;

use funcinfo::covariance::{estimate_class_covariance, expand_shared_block, CovarianceScheme};
use funcinfo::data::LabeledDataset;
use funcinfo::explain::{
    feature_contributions, random_scores, smoothgrad, smoothgrad_sq, vargrad, Attribution,
    EstimatorConfig,
};
use funcinfo::gaussian::{GaussianMeasure, SpdMatrix};
use funcinfo::model::DecisionFunction;
use ndarray::Array1;

use crate::config::Method;
use crate::error::CliError;

/// Default isotropic noise variance for the gradient baselines when the
/// user does not pick one: a fixed fraction of the squared data spread.
pub(crate) fn resolve_sigma_sq(choice: Option<f64>, data: &LabeledDataset) -> Result<f64, CliError> {
    let v = choice.unwrap_or_else(|| {
        funcinfo::explain::default_baseline_sigma_sq(data.feature_range())
    });
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Config(format!("noise variance must be positive, got {v}")));
    }
    Ok(v)
}

/// Attribution dispatch shared by `explain` and `evaluate`: owns the
/// estimator config, the baseline noise scale, and a per-class cache of
/// estimated covariances.
pub(crate) struct Estimators<'a> {
    pub f: &'a dyn DecisionFunction,
    pub data: &'a LabeledDataset,
    pub scheme: CovarianceScheme,
    pub jitter: f64,
    pub sigma_sq: f64,
    pub cfg: EstimatorConfig,
    /// Covariance loaded from a file; used for every class when present.
    pub loaded: Option<SpdMatrix>,
    cache: RefCell<HashMap<usize, SpdMatrix>>,
}

impl<'a> Estimators<'a> {
    pub fn new(
        f: &'a dyn DecisionFunction,
        data: &'a LabeledDataset,
        scheme: CovarianceScheme,
        jitter: f64,
        sigma_sq: f64,
        cfg: EstimatorConfig,
        loaded: Option<SpdMatrix>,
    ) -> Self {
        Self { f, data, scheme, jitter, sigma_sq, cfg, loaded, cache: RefCell::new(HashMap::new()) }
    }

    /// The covariance used to explain `class`: the loaded one when given,
    /// otherwise estimated from the dataset's class examples under the
    /// configured scheme (expanded to full size for shared-block schemes).
    pub fn class_covariance(&self, class: usize) -> Result<SpdMatrix, CliError> {
        if let Some(s) = &self.loaded {
            return Ok(s.clone());
        }
        if let Some(s) = self.cache.borrow().get(&class) {
            return Ok(s.clone());
        }
        // The identity scheme is positive definite by construction; jitter
        // exists to repair rank-deficient estimates and would only distort
        // the requested scale here.
        let jitter = match self.scheme {
            CovarianceScheme::Identity { .. } => 0.0,
            _ => self.jitter,
        };
        let est = estimate_class_covariance(self.data, class, self.scheme, jitter)?;
        let full = match self.scheme {
            CovarianceScheme::SharedBlock { block, groups } => {
                debug_assert_eq!(est.dim(), block);
                expand_shared_block(&est, groups)?
            }
            _ => est,
        };
        self.cache.borrow_mut().insert(class, full.clone());
        Ok(full)
    }

    /// One attribution for one example. `row_tag` diversifies the seeded
    /// uniform-random baseline across dataset rows; sampling methods use
    /// the shared config seed so their draw pattern is identical per row.
    pub fn scores(
        &self,
        method: Method,
        x: &Array1<f64>,
        class: usize,
        row_tag: u64,
    ) -> Result<Attribution, CliError> {
        let a = match method {
            Method::Ours => {
                let cov = self.class_covariance(class)?;
                let g = GaussianMeasure::full(x.clone(), cov)?;
                feature_contributions(self.f, class, &g, &self.cfg)?
            }
            Method::Smoothgrad => smoothgrad(self.f, class, x, self.sigma_sq, &self.cfg)?,
            Method::SmoothgradSq => smoothgrad_sq(self.f, class, x, self.sigma_sq, &self.cfg)?,
            Method::Vargrad => vargrad(self.f, class, x, self.sigma_sq, &self.cfg)?,
            Method::Random => {
                random_scores(x.len(), class, self.cfg.seed.wrapping_add(row_tag))
            }
        };
        Ok(a)
    }
}
