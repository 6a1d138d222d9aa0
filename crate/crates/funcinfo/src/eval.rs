//! Negative-perturbation evaluation of attributions.
//!
//! The protocol: mask features in increasing order of claimed importance —
//! the lowest-scoring fraction goes first — and watch the model's
//! decisions. An attribution that correctly ranked the load-bearing
//! features sacrifices only irrelevant coordinates early, so its metric
//! stays high across fractions and the area under the curve is *large*;
//! chance orderings destroy informative features sooner and score lower.
//! Two readouts are provided — agreement with the stored labels (accuracy)
//! and agreement with the model's own unmasked predictions (consistency) —
//! plus rank correlation for comparing score vectors directly.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabeledDataset, TokenLayout};
use crate::model::{predict_class, DecisionFunction, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("masking fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve fractions must be strictly increasing, got {prev} then {next}")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("ranking length {scores} does not match feature count {features}")]
    ScoreLengthMismatch { scores: usize, features: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("token layout covers {layout} coordinates but rows have {features}")]
    LayoutMismatch { layout: usize, features: usize },
    #[error("empty evaluation set")]
    EmptySet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

/// What a degradation readout compares the masked prediction against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// The dataset's stored labels.
    Label,
    /// The model's own prediction on the unmasked input.
    Predicted,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Label => "label",
            Target::Predicted => "predicted",
        }
    }
}

/// How masked coordinates are filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum Masker {
    /// Every masked coordinate becomes this value.
    ReplaceWithValue(f64),
    /// Scores are per-token; masking a token replaces its whole row with
    /// the replacement row.
    ReplaceTokenRows { layout: TokenLayout, replacement: Array1<f64> },
}

impl Masker {
    /// Number of scores a ranking must supply for inputs of width `d`.
    fn expected_scores(&self, d: usize) -> usize {
        match self {
            Masker::ReplaceWithValue(_) => d,
            Masker::ReplaceTokenRows { layout, .. } => layout.tokens,
        }
    }

    fn validate(&self, d: usize) -> Result<(), EvalError> {
        if let Masker::ReplaceTokenRows { layout, replacement } = self {
            if layout.len() != d {
                return Err(EvalError::LayoutMismatch { layout: layout.len(), features: d });
            }
            if replacement.len() != layout.dims {
                return Err(EvalError::LengthMismatch {
                    left: replacement.len(),
                    right: layout.dims,
                });
            }
        }
        Ok(())
    }
}

/// Indices of the `floor(fraction * count)` lowest-scoring units, ties
/// broken toward the lower index. A tiny slack absorbs the
/// `0.3 * 10 = 2.999...` style of floating-point embarrassment.
fn lowest_unit_indices(scores: &ArrayView1<f64>, fraction: f64) -> Vec<usize> {
    let count = scores.len();
    let k = ((fraction * count as f64) + 1e-9).floor() as usize;
    let k = k.min(count);
    let mut order: Vec<usize> = (0..count).collect();
    // Stable sort by ascending score keeps equal scores in index order.
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Masks the lowest-scoring `fraction` of scored units in `x`, mirroring a
/// least-to-most-important deletion schedule.
///
/// Scores are per-feature for value masking and per-token for token
/// masking. `fraction = 0` returns the input untouched; `fraction = 1`
/// masks everything.
pub fn mask(
    x: &ArrayView1<f64>,
    scores: &ArrayView1<f64>,
    fraction: f64,
    masker: &Masker,
) -> Result<Array1<f64>, EvalError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(EvalError::FractionOutOfRange(fraction));
    }
    masker.validate(x.len())?;
    let expected = masker.expected_scores(x.len());
    if scores.len() != expected {
        return Err(EvalError::ScoreLengthMismatch { scores: scores.len(), features: expected });
    }
    let mut out = x.to_owned();
    match masker {
        Masker::ReplaceWithValue(v) => {
            for i in lowest_unit_indices(scores, fraction) {
                out[i] = *v;
            }
        }
        Masker::ReplaceTokenRows { layout, replacement } => {
            for t in lowest_unit_indices(scores, fraction) {
                for e in 0..layout.dims {
                    out[t * layout.dims + e] = replacement[e];
                }
            }
        }
    }
    Ok(out)
}

/// Share of rows whose masked prediction still matches the target. Each
/// row uses its own score vector (row `i` of `scores`).
pub fn posthoc_accuracy(
    f: &dyn DecisionFunction,
    features: &ArrayView2<f64>,
    labels: &[usize],
    scores: &ArrayView2<f64>,
    fraction: f64,
    masker: &Masker,
    target: Target,
) -> Result<f64, EvalError> {
    let n = features.nrows();
    if n == 0 {
        return Err(EvalError::EmptySet);
    }
    if labels.len() != n {
        return Err(EvalError::LengthMismatch { left: labels.len(), right: n });
    }
    if scores.nrows() != n {
        return Err(EvalError::LengthMismatch { left: scores.nrows(), right: n });
    }
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = features.row(i);
        let target_class = match target {
            Target::Label => label,
            Target::Predicted => predict_class(f, &row)?,
        };
        let masked = mask(&row, &scores.row(i), fraction, masker)?;
        if predict_class(f, &masked.view())? == target_class {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Share of rows where masking leaves the model's own prediction
/// unchanged. Identical to [`posthoc_accuracy`] against the model's
/// unmasked predictions; labels are ignored.
pub fn posthoc_consistency(
    f: &dyn DecisionFunction,
    features: &ArrayView2<f64>,
    scores: &ArrayView2<f64>,
    fraction: f64,
    masker: &Masker,
) -> Result<f64, EvalError> {
    let labels = vec![0usize; features.nrows()];
    posthoc_accuracy(f, features, &labels, scores, fraction, masker, Target::Predicted)
}

/// One metric traced over masking fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub method: String,
    pub target: String,
    pub metric: String,
    pub fractions: Vec<f64>,
    pub values: Vec<f64>,
}

impl PerturbationCurve {
    pub fn auc(&self) -> Result<f64, EvalError> {
        auc(&self.fractions, &self.values)
    }
}

/// Trapezoidal area under the curve, normalized by the span of the
/// fractions so a constant-1 curve scores exactly 1 regardless of where
/// the fractions sit. Fractions must be strictly increasing with at least
/// two points.
pub fn auc(fractions: &[f64], values: &[f64]) -> Result<f64, EvalError> {
    if fractions.len() < 2 {
        return Err(EvalError::TooFewPoints(fractions.len()));
    }
    if fractions.len() != values.len() {
        return Err(EvalError::LengthMismatch { left: fractions.len(), right: values.len() });
    }
    for w in fractions.windows(2) {
        if w[1] <= w[0] {
            return Err(EvalError::NotIncreasing { prev: w[0], next: w[1] });
        }
    }
    // Numerator and denominator accumulate the same widths, so when every
    // trapezoid height is 1 the two sums are bitwise identical and the
    // ratio is exactly 1.
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..fractions.len() - 1 {
        let width = fractions[i + 1] - fractions[i];
        num += width * 0.5 * (values[i] + values[i + 1]);
        den += width;
    }
    Ok(num / den)
}

/// Average-tie ranks: values get ranks `1..=n`, equal values share the mean
/// of the ranks they occupy.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold ties; their 1-based ranks average
        // to (i + j) / 2 + 1.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-tie ranks; 0 when either side
/// has no rank variation (a flat vector carries no ordering information).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPoints(a.len()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean_a;
        let db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// The masking fractions used when a caller doesn't pick their own:
/// 0 through 0.9 in steps of 0.1.
pub fn default_fractions() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// Runs one attribution matrix through the masking protocol at each
/// fraction and returns the traced curve.
#[allow(clippy::too_many_arguments)]
pub fn trace_curve(
    f: &dyn DecisionFunction,
    data: &LabeledDataset,
    scores: &ArrayView2<f64>,
    fractions: &[f64],
    masker: &Masker,
    target: Target,
    method: &str,
) -> Result<PerturbationCurve, EvalError> {
    if fractions.len() < 2 {
        return Err(EvalError::TooFewPoints(fractions.len()));
    }
    let mut values = Vec::with_capacity(fractions.len());
    for &q in fractions {
        let v = match target {
            Target::Label => posthoc_accuracy(
                f,
                &data.features().view(),
                data.labels(),
                scores,
                q,
                masker,
                Target::Label,
            )?,
            Target::Predicted => {
                posthoc_consistency(f, &data.features().view(), scores, q, masker)?
            }
        };
        values.push(v);
    }
    Ok(PerturbationCurve {
        method: method.to_string(),
        target: target.as_str().to_string(),
        metric: match target {
            Target::Label => "accuracy".to_string(),
            Target::Predicted => "consistency".to_string(),
        },
        fractions: fractions.to_vec(),
        values,
    })
}

/// Writes curves as long-form CSV: `method,target,fraction,metric,value`.
pub fn write_curves_csv(
    w: &mut dyn Write,
    curves: &[PerturbationCurve],
) -> Result<(), EvalError> {
    writeln!(w, "method,target,fraction,metric,value")?;
    for c in curves {
        for (q, v) in c.fractions.iter().zip(&c.values) {
            writeln!(
                w,
                "{},{},{},{},{}",
                c.method,
                c.target,
                crate::data::format_float(*q),
                c.metric,
                crate::data::format_float(*v)
            )?;
        }
    }
    Ok(())
}

/// Writes one summary row per curve: `method,target,metric,auc`.
pub fn write_summary_csv(
    w: &mut dyn Write,
    curves: &[PerturbationCurve],
) -> Result<(), EvalError> {
    writeln!(w, "method,target,metric,auc")?;
    for c in curves {
        writeln!(
            w,
            "{},{},{},{}",
            c.method,
            c.target,
            c.metric,
            crate::data::format_float(c.auc()?)
        )?;
    }
    Ok(())
}

/// Stacks one attribution row per dataset row into the score matrix the
/// curve functions expect.
pub fn score_matrix(rows: &[Array1<f64>]) -> Result<Array2<f64>, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let d = rows[0].len();
    let mut m = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(EvalError::LengthMismatch { left: r.len(), right: d });
        }
        m.row_mut(i).assign(r);
    }
    Ok(m)
}
