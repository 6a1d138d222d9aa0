//! Attribution estimators.
//!
//! All estimators are Monte-Carlo averages over Gaussian perturbations of an
//! input point. The central quantity is the covariance-weighted gradient
//! score
//!
//! ```text
//! score_i = (1/n) sum_s (S grad f(z_s))_i * (grad f(z_s))_i [/ max(f(z_s), floor)]
//! ```
//!
//! with draws `z_s ~ N(x, S)`. Summed over features, and with the value
//! normalization enabled, this is a plug-in estimate of the
//! gradient-information functional `E[ <S grad f, grad f> / f ]`, the
//! quantity that upper-bounds the functional entropy (half of it does). The
//! same engine with `S = I` gives the independent-coordinates variant, and a
//! conditional-measure wrapper scores feature subsets. SmoothGrad,
//! SmoothGradSQ and VarGrad are provided as isotropic baselines.
//!
//! Every estimator draws from the documented generator keyed by the config
//! seed, so equal configs reproduce bit-identical results, and estimators
//! that share a seed and a dimension see the same underlying standard-normal
//! draws.

use std::io::{BufRead, Write};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TokenLayout;
use crate::gaussian::{gather, GaussianError, GaussianMeasure, Partition};
use crate::model::{DecisionFunction, ModelError, PartialInputFunction};
use crate::rng::{fill_standard_normal, stream_rng, uniform_01};
use crate::ToolMeta;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("estimator needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown method tag {0:?}")]
    UnknownMethod(String),
    #[error("attribution file is malformed at line {line}: {message}")]
    MalformedFile { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for ExplainError {
    fn from(e: std::io::Error) -> Self {
        ExplainError::Io(e.to_string())
    }
}

/// Knobs shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Monte-Carlo sample count `n`.
    pub samples: usize,
    /// Seed for the documented generator.
    pub seed: u64,
    /// Floor applied to function values before dividing by them.
    pub value_floor: f64,
    /// Divide each summand by the (floored) function value. Off by default:
    /// the plain covariance-weighted score. On, the scores become the
    /// per-feature pieces of the entropy-bounding information functional.
    pub normalize_by_f: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { samples: 64, seed: 0, value_floor: 1e-12, normalize_by_f: false }
    }
}

impl EstimatorConfig {
    fn validate(&self) -> Result<(), ExplainError> {
        if self.samples == 0 {
            return Err(ExplainError::InvalidConfig("sample count must be positive".into()));
        }
        if !(self.value_floor.is_finite() && self.value_floor > 0.0) {
            return Err(ExplainError::InvalidConfig(format!(
                "value floor must be positive, got {}",
                self.value_floor
            )));
        }
        Ok(())
    }
}

/// Which estimator produced an attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodTag {
    /// Gradient-squared over value under independent unit-variance noise.
    FisherIndependent,
    /// Covariance-weighted gradient scores under dependent noise.
    CovarianceWeighted,
    /// Subset scores with the complement frozen at the input.
    SubsetConditioned,
    /// Subset scores averaged over the complement's marginal.
    SubsetMarginalized,
    /// Mean gradient under isotropic noise.
    SmoothGrad,
    /// Mean squared gradient under isotropic noise.
    SmoothGradSq,
    /// Per-feature gradient variance under isotropic noise.
    VarGrad,
    /// Seeded uniform scores; the do-nothing baseline.
    UniformRandom,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::FisherIndependent => "fisher-independent",
            MethodTag::CovarianceWeighted => "covariance-weighted",
            MethodTag::SubsetConditioned => "subset-conditioned",
            MethodTag::SubsetMarginalized => "subset-marginalized",
            MethodTag::SmoothGrad => "smoothgrad",
            MethodTag::SmoothGradSq => "smoothgrad-sq",
            MethodTag::VarGrad => "vargrad",
            MethodTag::UniformRandom => "uniform-random",
        }
    }
}

impl std::str::FromStr for MethodTag {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "fisher-independent" => MethodTag::FisherIndependent,
            "covariance-weighted" => MethodTag::CovarianceWeighted,
            "subset-conditioned" => MethodTag::SubsetConditioned,
            "subset-marginalized" => MethodTag::SubsetMarginalized,
            "smoothgrad" => MethodTag::SmoothGrad,
            "smoothgrad-sq" => MethodTag::SmoothGradSq,
            "vargrad" => MethodTag::VarGrad,
            "uniform-random" => MethodTag::UniformRandom,
            other => return Err(ExplainError::UnknownMethod(other.to_string())),
        })
    }
}

/// Per-feature scores with their Monte-Carlo uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub scores: Array1<f64>,
    /// Standard error of each score (sample variance of the per-draw
    /// summands); zero when only one draw contributed.
    pub std_errors: Array1<f64>,
    pub method: MethodTag,
    /// Class the scores explain.
    pub class: usize,
    /// Draws that went into the estimate.
    pub samples: usize,
    pub seed: u64,
    /// Whole-input estimate (the total information) where the method has
    /// one; the feature scores decompose it.
    pub total: Option<f64>,
    pub total_std_error: Option<f64>,
}

/// Scalar Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Streaming mean and spread per coordinate (Welford's recurrence).
struct VectorMoments {
    count: usize,
    mean: Array1<f64>,
    m2: Array1<f64>,
}

impl VectorMoments {
    fn new(d: usize) -> Self {
        Self { count: 0, mean: Array1::zeros(d), m2: Array1::zeros(d) }
    }

    fn update(&mut self, x: &Array1<f64>) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..self.mean.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Standard error of the mean; zeros when fewer than two updates.
    fn std_error(&self) -> Array1<f64> {
        if self.count < 2 {
            return Array1::zeros(self.mean.len());
        }
        let n = self.count as f64;
        self.m2.mapv(|m2| (m2 / (n - 1.0) / n).max(0.0).sqrt())
    }

}

struct ScalarMoments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl ScalarMoments {
    fn new() -> Self {
        Self { count: 0, mean: 0.0, m2: 0.0 }
    }

    fn update(&mut self, x: f64) {
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        self.mean += delta / n;
        self.m2 += delta * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2 / (n - 1.0) / n).max(0.0).sqrt()
    }
}

/// Monte-Carlo estimate of the functional entropy of output `class` under
/// the measure: `E[f log f] - E[f] log E[f]`, computed in the equivalent
/// one-pass form `mean(f * (log f - log mean(f)))` so that a constant
/// function comes out exactly zero. Standard error by the delta method.
pub fn functional_entropy_mc(
    f: &dyn DecisionFunction,
    class: usize,
    g: &GaussianMeasure,
    cfg: &EstimatorConfig,
) -> Result<ScalarEstimate, ExplainError> {
    cfg.validate()?;
    if cfg.samples < 2 {
        return Err(ExplainError::TooFewSamples { needed: 2, got: cfg.samples });
    }
    check_measure_dim(f, g)?;
    check_class(f, class)?;

    let d = g.dim();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut u = vec![0.0; d];
    let mut values = Vec::with_capacity(cfg.samples);
    let mut sum = 0.0;
    for _ in 0..cfg.samples {
        fill_standard_normal(&mut rng, &mut u);
        let z = g.transform_standard(&ArrayView1::from(&u[..]))?;
        let v = f.evaluate(&z.view())?[class];
        values.push(v);
        sum += v;
    }
    let mean_f = sum / cfg.samples as f64;
    let log_mean = if mean_f > 0.0 { mean_f.ln() } else { 0.0 };

    let mut value_acc = ScalarMoments::new();
    let mut influence = ScalarMoments::new();
    for &v in &values {
        let term = if v > 0.0 && mean_f > 0.0 { v * (v.ln() - log_mean) } else { 0.0 };
        value_acc.update(term);
        influence.update(term - v);
    }
    Ok(ScalarEstimate {
        value: value_acc.mean,
        std_error: influence.std_error(),
        samples: cfg.samples,
    })
}

fn check_measure_dim(f: &dyn DecisionFunction, g: &GaussianMeasure) -> Result<(), ExplainError> {
    if g.dim() != f.num_features() {
        return Err(ExplainError::DimensionMismatch {
            expected: f.num_features(),
            actual: g.dim(),
        });
    }
    Ok(())
}

fn check_class(f: &dyn DecisionFunction, class: usize) -> Result<(), ExplainError> {
    if class >= f.num_classes() {
        return Err(ExplainError::Model(ModelError::ClassOutOfRange {
            class,
            classes: f.num_classes(),
        }));
    }
    Ok(())
}

/// Shared engine: draws `z_s` from the measure, weights the gradient by the
/// measure covariance, and averages `(S g)_i * g_i [/ max(f, floor)]`.
fn weighted_gradient_scores(
    f: &dyn DecisionFunction,
    class: usize,
    g: &GaussianMeasure,
    normalize: bool,
    cfg: &EstimatorConfig,
    stream: u64,
    method: MethodTag,
) -> Result<Attribution, ExplainError> {
    cfg.validate()?;
    check_measure_dim(f, g)?;
    check_class(f, class)?;

    let d = g.dim();
    let mut rng = stream_rng(cfg.seed, stream);
    let mut u = vec![0.0; d];
    let mut summand = Array1::<f64>::zeros(d);
    let mut moments = VectorMoments::new(d);
    let mut total_moments = ScalarMoments::new();

    for _ in 0..cfg.samples {
        fill_standard_normal(&mut rng, &mut u);
        let z = g.transform_standard(&ArrayView1::from(&u[..]))?;
        let grad = f.input_gradient(&z.view(), class)?;
        let weighted = g.covariance_apply(&grad.view())?;
        let denom =
            if normalize { f.evaluate(&z.view())?[class].max(cfg.value_floor) } else { 1.0 };
        let mut draw_total = 0.0;
        for i in 0..d {
            let t = weighted[i] * grad[i] / denom;
            summand[i] = t;
            draw_total += t;
        }
        moments.update(&summand);
        total_moments.update(draw_total);
    }

    Ok(Attribution {
        std_errors: moments.std_error(),
        scores: moments.mean,
        method,
        class,
        samples: cfg.samples,
        seed: cfg.seed,
        total: Some(total_moments.mean),
        total_std_error: Some(total_moments.std_error()),
    })
}

/// Independent-coordinates gradient information at `x`: draws from
/// `N(x, I)` and averages `grad_i^2 / max(f, floor)` per feature. Always
/// value-normalized; the total is the whole-input information estimate.
pub fn fisher_independent(
    f: &dyn DecisionFunction,
    class: usize,
    x: &Array1<f64>,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ExplainError> {
    let g = GaussianMeasure::standard(x.clone())?;
    weighted_gradient_scores(f, class, &g, true, cfg, 0, MethodTag::FisherIndependent)
}

/// Covariance-weighted per-feature scores under draws from the dependent
/// measure `g`: `score_i = mean[ (S grad f)_i * grad_i [/ max(f, floor)] ]`.
/// With `normalize_by_f` enabled the total matches the dependent
/// gradient-information functional estimated on the same draws.
pub fn feature_contributions(
    f: &dyn DecisionFunction,
    class: usize,
    g: &GaussianMeasure,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ExplainError> {
    weighted_gradient_scores(
        f,
        class,
        g,
        cfg.normalize_by_f,
        cfg,
        0,
        MethodTag::CovarianceWeighted,
    )
}

/// How the complement coordinates are handled when scoring a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetMode {
    /// Outer loop draws the complement from its marginal; inner loop scores
    /// the subset under the conditional measure given that draw.
    MarginalizeOverComplement,
    /// The complement is pinned at the input's own values; one conditional
    /// measure, one loop.
    ConditionOnInput,
}

/// Scores only the subset coordinates of the partition, with the complement
/// handled per `mode`. The subset scores are ordered like
/// `p.subset()`. Requires a full covariance on `g`.
///
/// In the marginalizing mode the config's sample count is used for both
/// loops (`n` outer draws, `n` inner draws each); the inner loop of outer
/// draw `o` runs on stream `o + 1` of the config seed, and the reported
/// standard errors are taken across the outer replicates.
pub fn subset_contributions(
    f: &dyn DecisionFunction,
    class: usize,
    g: &GaussianMeasure,
    p: &Partition,
    cfg: &EstimatorConfig,
    mode: SubsetMode,
) -> Result<Attribution, ExplainError> {
    cfg.validate()?;
    check_measure_dim(f, g)?;
    check_class(f, class)?;
    if p.dim() != g.dim() {
        return Err(ExplainError::DimensionMismatch { expected: g.dim(), actual: p.dim() });
    }

    match mode {
        SubsetMode::ConditionOnInput => {
            let observed = gather(&g.mean().view(), p.complement());
            let cond = g.condition(p, &observed.view())?;
            let partial =
                PartialInputFunction::new(f, g.mean().clone(), p.subset().to_vec())?;
            let mut a = weighted_gradient_scores(
                &partial,
                class,
                &cond,
                cfg.normalize_by_f,
                cfg,
                0,
                MethodTag::SubsetConditioned,
            )?;
            a.method = MethodTag::SubsetConditioned;
            Ok(a)
        }
        SubsetMode::MarginalizeOverComplement => {
            let marginal = g.marginal(p)?;
            let mut outer_rng = stream_rng(cfg.seed, 0);
            let mut u2 = vec![0.0; p.complement().len()];
            let mut score_moments = VectorMoments::new(p.subset().len());
            let mut total_moments = ScalarMoments::new();
            for outer in 0..cfg.samples {
                fill_standard_normal(&mut outer_rng, &mut u2);
                let z2 = marginal.transform_standard(&ArrayView1::from(&u2[..]))?;
                let cond = g.condition(p, &z2.view())?;
                let template =
                    crate::gaussian::scatter(g.mean(), p.complement(), &z2.view());
                let partial =
                    PartialInputFunction::new(f, template, p.subset().to_vec())?;
                let inner = weighted_gradient_scores(
                    &partial,
                    class,
                    &cond,
                    cfg.normalize_by_f,
                    cfg,
                    outer as u64 + 1,
                    MethodTag::SubsetMarginalized,
                )?;
                score_moments.update(&inner.scores);
                total_moments.update(inner.total.expect("engine always reports a total"));
            }
            Ok(Attribution {
                std_errors: score_moments.std_error(),
                scores: score_moments.mean,
                method: MethodTag::SubsetMarginalized,
                class,
                samples: cfg.samples * cfg.samples,
                seed: cfg.seed,
                total: Some(total_moments.mean),
                total_std_error: Some(total_moments.std_error()),
            })
        }
    }
}

fn isotropic_gradient_draws(
    f: &dyn DecisionFunction,
    class: usize,
    x: &Array1<f64>,
    sigma_sq: f64,
    cfg: &EstimatorConfig,
    mut per_draw: impl FnMut(&Array1<f64>),
) -> Result<(), ExplainError> {
    cfg.validate()?;
    check_class(f, class)?;
    if x.len() != f.num_features() {
        return Err(ExplainError::DimensionMismatch {
            expected: f.num_features(),
            actual: x.len(),
        });
    }
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(ExplainError::InvalidConfig(format!(
            "noise scale must be positive, got {sigma_sq}"
        )));
    }
    let g = GaussianMeasure::isotropic(x.clone(), sigma_sq)?;
    let d = x.len();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut u = vec![0.0; d];
    for _ in 0..cfg.samples {
        fill_standard_normal(&mut rng, &mut u);
        let z = g.transform_standard(&ArrayView1::from(&u[..]))?;
        let grad = f.input_gradient(&z.view(), class)?;
        per_draw(&grad);
    }
    Ok(())
}

/// Mean gradient under isotropic noise `N(x, sigma_sq I)`. Signed scores.
pub fn smoothgrad(
    f: &dyn DecisionFunction,
    class: usize,
    x: &Array1<f64>,
    sigma_sq: f64,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ExplainError> {
    let mut moments = VectorMoments::new(x.len());
    isotropic_gradient_draws(f, class, x, sigma_sq, cfg, |grad| moments.update(grad))?;
    Ok(Attribution {
        std_errors: moments.std_error(),
        scores: moments.mean,
        method: MethodTag::SmoothGrad,
        class,
        samples: cfg.samples,
        seed: cfg.seed,
        total: None,
        total_std_error: None,
    })
}

/// Mean squared gradient under isotropic noise.
pub fn smoothgrad_sq(
    f: &dyn DecisionFunction,
    class: usize,
    x: &Array1<f64>,
    sigma_sq: f64,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ExplainError> {
    let mut moments = VectorMoments::new(x.len());
    let mut sq = Array1::<f64>::zeros(x.len());
    isotropic_gradient_draws(f, class, x, sigma_sq, cfg, |grad| {
        for i in 0..grad.len() {
            sq[i] = grad[i] * grad[i];
        }
        moments.update(&sq);
    })?;
    Ok(Attribution {
        std_errors: moments.std_error(),
        scores: moments.mean,
        method: MethodTag::SmoothGradSq,
        class,
        samples: cfg.samples,
        seed: cfg.seed,
        total: None,
        total_std_error: None,
    })
}

/// Unbiased per-feature variance of the gradient under isotropic noise.
/// Needs at least two samples. The standard error is that of the squared
/// deviations around the (frozen) first-pass mean.
pub fn vargrad(
    f: &dyn DecisionFunction,
    class: usize,
    x: &Array1<f64>,
    sigma_sq: f64,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ExplainError> {
    if cfg.samples < 2 {
        return Err(ExplainError::TooFewSamples { needed: 2, got: cfg.samples });
    }
    // First pass: the gradient mean. Second pass over the identical draw
    // sequence: moments of the scaled squared deviations, whose mean is the
    // unbiased sample variance.
    let mut mean_pass = VectorMoments::new(x.len());
    isotropic_gradient_draws(f, class, x, sigma_sq, cfg, |grad| mean_pass.update(grad))?;
    let center = mean_pass.mean;

    let correction = cfg.samples as f64 / (cfg.samples as f64 - 1.0);
    let mut moments = VectorMoments::new(x.len());
    let mut dev = Array1::<f64>::zeros(x.len());
    isotropic_gradient_draws(f, class, x, sigma_sq, cfg, |grad| {
        for i in 0..grad.len() {
            let diff = grad[i] - center[i];
            dev[i] = correction * diff * diff;
        }
        moments.update(&dev);
    })?;
    Ok(Attribution {
        std_errors: moments.std_error(),
        scores: moments.mean,
        method: MethodTag::VarGrad,
        class,
        samples: cfg.samples,
        seed: cfg.seed,
        total: None,
        total_std_error: None,
    })
}

/// Seeded uniform `[0, 1)` scores; the reference point every informative
/// method should beat.
pub fn random_scores(d: usize, class: usize, seed: u64) -> Attribution {
    let mut rng = stream_rng(seed, 0);
    let scores = Array1::from_shape_fn(d, |_| uniform_01(&mut rng));
    Attribution {
        scores,
        std_errors: Array1::zeros(d),
        method: MethodTag::UniformRandom,
        class,
        samples: 0,
        seed,
        total: None,
        total_std_error: None,
    }
}

/// Collapses per-coordinate scores to per-token scores by summing each
/// token's row.
pub fn aggregate_token_scores(
    scores: &ArrayView1<f64>,
    layout: &TokenLayout,
) -> Result<Array1<f64>, ExplainError> {
    if layout.len() != scores.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: layout.len(),
            actual: scores.len(),
        });
    }
    let mut out = Array1::<f64>::zeros(layout.tokens);
    for t in 0..layout.tokens {
        for e in 0..layout.dims {
            out[t] += scores[t * layout.dims + e];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Attribution export format
// ---------------------------------------------------------------------------

/// Metadata header carried on the first line of an attribution CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMeta {
    pub method: String,
    pub class: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Writes an attribution as CSV: a `# `-prefixed JSON metadata line, a
/// column header, then one `feature_index,score,std_error` row per feature.
pub fn write_attribution_csv(
    w: &mut dyn Write,
    a: &Attribution,
    scheme: Option<&str>,
    tool: Option<&ToolMeta>,
) -> Result<(), ExplainError> {
    let meta = AttributionMeta {
        method: a.method.as_str().to_string(),
        class: a.class,
        n: a.samples,
        seed: a.seed,
        scheme: scheme.map(str::to_string),
        tool_version: tool.map(|t| t.tool_version.clone()),
        config_hash: tool.map(|t| t.config_hash.clone()),
    };
    let header = serde_json::to_string(&meta)
        .map_err(|e| ExplainError::MalformedFile { line: 0, message: e.to_string() })?;
    writeln!(w, "# {header}")?;
    writeln!(w, "feature_index,score,std_error")?;
    for i in 0..a.scores.len() {
        writeln!(
            w,
            "{i},{},{}",
            crate::data::format_float(a.scores[i]),
            crate::data::format_float(a.std_errors[i])
        )?;
    }
    Ok(())
}

/// Reads an attribution CSV written by [`write_attribution_csv`].
pub fn read_attribution_csv(
    r: &mut dyn BufRead,
) -> Result<(Attribution, AttributionMeta), ExplainError> {
    let mut lines = Vec::new();
    for line in r.lines() {
        lines.push(line?);
    }
    let mut iter = lines.iter().enumerate();
    let meta: AttributionMeta = match iter.next() {
        Some((_, line)) if line.starts_with('#') => {
            serde_json::from_str(line.trim_start_matches('#').trim()).map_err(|e| {
                ExplainError::MalformedFile { line: 1, message: e.to_string() }
            })?
        }
        _ => {
            return Err(ExplainError::MalformedFile {
                line: 1,
                message: "missing metadata header line".into(),
            })
        }
    };
    match iter.next() {
        Some((_, line)) if line.trim() == "feature_index,score,std_error" => {}
        other => {
            return Err(ExplainError::MalformedFile {
                line: 2,
                message: format!("unexpected column header {other:?}"),
            })
        }
    }
    let mut scores = Vec::new();
    let mut std_errors = Vec::new();
    for (idx, line) in iter {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(ExplainError::MalformedFile {
                line: idx + 1,
                message: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let row: usize = fields[0].trim().parse().map_err(|e| ExplainError::MalformedFile {
            line: idx + 1,
            message: format!("bad feature index: {e}"),
        })?;
        if row != scores.len() {
            return Err(ExplainError::MalformedFile {
                line: idx + 1,
                message: format!("feature index {row} out of order"),
            });
        }
        scores.push(fields[1].trim().parse::<f64>().map_err(|e| {
            ExplainError::MalformedFile { line: idx + 1, message: format!("bad score: {e}") }
        })?);
        std_errors.push(fields[2].trim().parse::<f64>().map_err(|e| {
            ExplainError::MalformedFile { line: idx + 1, message: format!("bad std error: {e}") }
        })?);
    }
    if scores.is_empty() {
        return Err(ExplainError::MalformedFile { line: 3, message: "no score rows".into() });
    }
    let method: MethodTag = meta.method.parse()?;
    let a = Attribution {
        scores: Array1::from_vec(scores),
        std_errors: Array1::from_vec(std_errors),
        method,
        class: meta.class,
        samples: meta.n,
        seed: meta.seed,
        total: None,
        total_std_error: None,
    };
    Ok((a, meta))
}

/// Default isotropic noise scale for the baselines: `0.01 * range^2`, a
/// deliberate fraction of the squared spread of the data.
pub fn default_baseline_sigma_sq(feature_range: f64) -> f64 {
    let r = if feature_range > 0.0 { feature_range } else { 1.0 };
    0.01 * r * r
}
