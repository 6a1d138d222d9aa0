//! Differentiable decision functions with exact input gradients.
//!
//! The estimators in [`crate::explain`] only need two things from a model:
//! its value at a point and the gradient of one output coordinate with
//! respect to the input. That contract is [`DecisionFunction`]. The module
//! provides a small ReLU/softmax MLP ([`MlpModel`]) with plain SGD training,
//! closed-form functions used by the theory checks ([`AnalyticFunction`]),
//! and two adapters: an affine input reparametrization and a partial-input
//! view that freezes a set of coordinates.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::gaussian::{affine_transform, gather};
use crate::rng::{shuffle, stream_rng, uniform_01};
use crate::ToolMeta;

/// On-disk checkpoint schema version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training setup: {0}")]
    InvalidTraining(String),
    #[error("checkpoint is malformed: {0}")]
    MalformedCheckpoint(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// A function from feature vectors to per-class scores, differentiable in
/// its input.
///
/// Classifier implementations return a probability vector: entries in
/// `(0, 1]` summing to one within 1e-6. Closed-form test functions may
/// return unnormalized non-negative values instead; callers that need a
/// simplex should stick to the classifier types.
pub trait DecisionFunction {
    /// Input dimension `d`.
    fn num_features(&self) -> usize;

    /// Number of output coordinates `k`.
    fn num_classes(&self) -> usize;

    /// Value of all output coordinates at `z` (length `k`).
    fn evaluate(&self, z: &ArrayView1<f64>) -> Result<Array1<f64>, ModelError>;

    /// Gradient of output coordinate `class` with respect to the input
    /// (length `d`). Exact, not a finite-difference approximation.
    fn input_gradient(&self, z: &ArrayView1<f64>, class: usize)
        -> Result<Array1<f64>, ModelError>;
}

fn check_input(d: usize, z: &ArrayView1<f64>) -> Result<(), ModelError> {
    if z.len() != d {
        return Err(ModelError::DimensionMismatch { expected: d, actual: z.len() });
    }
    Ok(())
}

fn check_class(k: usize, class: usize) -> Result<(), ModelError> {
    if class >= k {
        return Err(ModelError::ClassOutOfRange { class, classes: k });
    }
    Ok(())
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Fully connected network: ReLU on hidden layers, softmax on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l + 1], widths[l])`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MlpModel {
    /// Fresh network with uniform `+-sqrt(6 / (fan_in + fan_out))` weights
    /// drawn from the documented generator and zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self, ModelError> {
        if widths.len() < 2 {
            return Err(ModelError::InvalidArchitecture(
                "need at least input and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(ModelError::InvalidArchitecture("zero-width layer".into()));
        }
        let mut rng = stream_rng(seed, 0);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                (2.0 * uniform_01(&mut rng) - 1.0) * limit
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { widths: widths.to_vec(), weights, biases })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Pre-activations and activations for every layer. `activations[0]` is
    /// the input; the final activation is the softmax output.
    fn forward(&self, z: &ArrayView1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut act = Vec::with_capacity(layers + 1);
        act.push(z.to_owned());
        for l in 0..layers {
            let p = self.weights[l].dot(&act[l]) + &self.biases[l];
            let a = if l + 1 < layers { p.mapv(|v| v.max(0.0)) } else { softmax(&p) };
            pre.push(p);
            act.push(a);
        }
        (pre, act)
    }

    /// Average cross-entropy of the true class over a dataset.
    pub fn mean_nll(&self, data: &LabeledDataset) -> Result<f64, ModelError> {
        if data.num_examples() == 0 {
            return Err(ModelError::InvalidTraining("empty dataset".into()));
        }
        let mut acc = 0.0;
        for (row, &label) in data.features().rows().into_iter().zip(data.labels()) {
            check_class(self.num_classes(), label)?;
            let probs = self.evaluate(&row)?;
            acc += -(probs[label].max(f64::MIN_POSITIVE)).ln();
        }
        Ok(acc / data.num_examples() as f64)
    }
}

impl DecisionFunction for MlpModel {
    fn num_features(&self) -> usize {
        self.widths[0]
    }

    fn num_classes(&self) -> usize {
        *self.widths.last().expect("validated: at least two widths")
    }

    fn evaluate(&self, z: &ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        let (_, act) = self.forward(z);
        Ok(act.into_iter().next_back().expect("forward returns output"))
    }

    fn input_gradient(
        &self,
        z: &ArrayView1<f64>,
        class: usize,
    ) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        check_class(self.num_classes(), class)?;
        let (pre, act) = self.forward(z);
        let probs = act.last().expect("forward returns output");

        // Gradient of the softmax coordinate with respect to the logits:
        // p_c * (1{j = c} - p_j).
        let mut delta = probs.mapv(|p| -probs[class] * p);
        delta[class] += probs[class];

        // Backpropagate through the hidden layers; ReLU derivative at zero
        // is taken as zero.
        let layers = self.weights.len();
        let mut grad = delta;
        for l in (0..layers).rev() {
            grad = self.weights[l].t().dot(&grad);
            if l > 0 {
                let gate = pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                grad = grad * gate;
            }
        }
        Ok(grad)
    }
}

/// Settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Plain mini-batch SGD on the cross-entropy loss.
///
/// Examples are reshuffled every epoch with the documented generator
/// (stream 1 of the training seed), so equal seeds retrain to bit-identical
/// weights. Returns the mean training cross-entropy measured after each
/// epoch; with zero epochs the model is untouched and the trace is empty.
/// The trace is expected, not guaranteed, to be non-increasing on the
/// bundled synthetic tasks.
pub fn train(
    model: &mut MlpModel,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, ModelError> {
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidTraining("batch size must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(ModelError::InvalidTraining(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if data.num_examples() == 0 {
        return Err(ModelError::InvalidTraining("empty dataset".into()));
    }
    if data.dim() != model.num_features() {
        return Err(ModelError::DimensionMismatch {
            expected: model.num_features(),
            actual: data.dim(),
        });
    }
    if data.num_classes() > model.num_classes() {
        return Err(ModelError::InvalidTraining(format!(
            "dataset has {} classes but the model outputs {}",
            data.num_classes(),
            model.num_classes()
        )));
    }

    let m = data.num_examples();
    let layers = model.weights.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut shuffle_rng = stream_rng(cfg.seed, 1);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        shuffle(&mut shuffle_rng, &mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_w: Vec<Array2<f64>> =
                model.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
            let mut grad_b: Vec<Array1<f64>> =
                model.biases.iter().map(|b| Array1::zeros(b.len())).collect();
            for &idx in batch {
                let x = data.features().row(idx);
                let label = data.labels()[idx];
                let (pre, act) = model.forward(&x);
                let probs = act.last().expect("forward returns output");

                // Cross-entropy gradient with respect to the logits.
                let mut delta = probs.clone();
                delta[label] -= 1.0;

                for l in (0..layers).rev() {
                    for (r, dv) in delta.iter().enumerate() {
                        for (c, av) in act[l].iter().enumerate() {
                            grad_w[l][[r, c]] += dv * av;
                        }
                        grad_b[l][r] += dv;
                    }
                    if l > 0 {
                        let back = model.weights[l].t().dot(&delta);
                        let gate = pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                        delta = back * gate;
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for l in 0..layers {
                model.weights[l].scaled_add(-scale, &grad_w[l]);
                model.biases[l].scaled_add(-scale, &grad_b[l]);
            }
        }
        trace.push(model.mean_nll(data)?);
    }
    Ok(trace)
}

/// Index of the largest output coordinate; ties go to the lower index.
pub fn predict_class(f: &dyn DecisionFunction, z: &ArrayView1<f64>) -> Result<usize, ModelError> {
    let values = f.evaluate(z)?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Share of examples whose predicted class equals the label.
pub fn accuracy(f: &dyn DecisionFunction, data: &LabeledDataset) -> Result<f64, ModelError> {
    if data.num_examples() == 0 {
        return Err(ModelError::InvalidTraining("empty dataset".into()));
    }
    let mut hits = 0usize;
    for (row, &label) in data.features().rows().into_iter().zip(data.labels()) {
        if predict_class(f, &row)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.num_examples() as f64)
}

/// Closed-form functions with known gradients, used by the theory checks.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticFunction {
    /// `f(z) = exp(w . z)`, a single always-positive output.
    ExpSum { weights: Array1<f64> },
    /// Softmax over the affine logits `W z + b`.
    LinearSoftmax { weights: Array2<f64>, bias: Array1<f64> },
    /// `f(z) = w . z + intercept`, a single raw affine output. Only
    /// meaningful where the caller keeps it positive.
    LinearStub { weights: Array1<f64>, intercept: f64 },
}

impl DecisionFunction for AnalyticFunction {
    fn num_features(&self) -> usize {
        match self {
            AnalyticFunction::ExpSum { weights } => weights.len(),
            AnalyticFunction::LinearSoftmax { weights, .. } => weights.ncols(),
            AnalyticFunction::LinearStub { weights, .. } => weights.len(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            AnalyticFunction::ExpSum { .. } | AnalyticFunction::LinearStub { .. } => 1,
            AnalyticFunction::LinearSoftmax { weights, .. } => weights.nrows(),
        }
    }

    fn evaluate(&self, z: &ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        Ok(match self {
            AnalyticFunction::ExpSum { weights } => {
                Array1::from_elem(1, weights.dot(z).exp())
            }
            AnalyticFunction::LinearSoftmax { weights, bias } => {
                softmax(&(weights.dot(z) + bias))
            }
            AnalyticFunction::LinearStub { weights, intercept } => {
                Array1::from_elem(1, weights.dot(z) + intercept)
            }
        })
    }

    fn input_gradient(
        &self,
        z: &ArrayView1<f64>,
        class: usize,
    ) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        check_class(self.num_classes(), class)?;
        Ok(match self {
            AnalyticFunction::ExpSum { weights } => {
                let v = weights.dot(z).exp();
                weights.mapv(|w| w * v)
            }
            AnalyticFunction::LinearSoftmax { weights, bias } => {
                let probs = softmax(&(weights.dot(z) + bias));
                // d p_c / d z = p_c * (w_c - sum_j p_j w_j)
                let mut avg = Array1::<f64>::zeros(self.num_features());
                for (j, row) in weights.rows().into_iter().enumerate() {
                    avg.scaled_add(probs[j], &row);
                }
                let mut grad = weights.row(class).to_owned();
                grad -= &avg;
                grad.mapv(|v| v * probs[class])
            }
            AnalyticFunction::LinearStub { weights, .. } => weights.clone(),
        })
    }
}

/// View of `inner` under the substitution `z = offset + matrix * u`.
///
/// Its gradient with respect to `u` is `matrix^T` applied to the inner
/// gradient. The point transform goes through the same helper as Gaussian
/// sampling, so draws and reparametrized evaluations coincide bitwise.
pub struct AffineReparam<'a> {
    inner: &'a dyn DecisionFunction,
    offset: Array1<f64>,
    matrix: Array2<f64>,
}

impl<'a> AffineReparam<'a> {
    pub fn new(
        inner: &'a dyn DecisionFunction,
        offset: Array1<f64>,
        matrix: Array2<f64>,
    ) -> Result<Self, ModelError> {
        if offset.len() != inner.num_features() {
            return Err(ModelError::DimensionMismatch {
                expected: inner.num_features(),
                actual: offset.len(),
            });
        }
        if matrix.nrows() != inner.num_features() {
            return Err(ModelError::DimensionMismatch {
                expected: inner.num_features(),
                actual: matrix.nrows(),
            });
        }
        Ok(Self { inner, offset, matrix })
    }

    fn to_inner(&self, u: &ArrayView1<f64>) -> Array1<f64> {
        affine_transform(&self.offset, &self.matrix, u)
    }
}

impl DecisionFunction for AffineReparam<'_> {
    fn num_features(&self) -> usize {
        self.matrix.ncols()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn evaluate(&self, u: &ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), u)?;
        self.inner.evaluate(&self.to_inner(u).view())
    }

    fn input_gradient(
        &self,
        u: &ArrayView1<f64>,
        class: usize,
    ) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), u)?;
        let g = self.inner.input_gradient(&self.to_inner(u).view(), class)?;
        Ok(self.matrix.t().dot(&g))
    }
}

/// View of `inner` with all but the listed coordinates frozen at a template
/// point. The active coordinates become the inputs of the view.
pub struct PartialInputFunction<'a> {
    inner: &'a dyn DecisionFunction,
    template: Array1<f64>,
    active: Vec<usize>,
}

impl<'a> PartialInputFunction<'a> {
    pub fn new(
        inner: &'a dyn DecisionFunction,
        template: Array1<f64>,
        active: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if template.len() != inner.num_features() {
            return Err(ModelError::DimensionMismatch {
                expected: inner.num_features(),
                actual: template.len(),
            });
        }
        if active.is_empty() || active.iter().any(|&i| i >= template.len()) {
            return Err(ModelError::InvalidArchitecture(
                "active indices must be non-empty and in range".into(),
            ));
        }
        Ok(Self { inner, template, active })
    }

    fn embed(&self, z: &ArrayView1<f64>) -> Array1<f64> {
        crate::gaussian::scatter(&self.template, &self.active, z)
    }
}

impl DecisionFunction for PartialInputFunction<'_> {
    fn num_features(&self) -> usize {
        self.active.len()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn evaluate(&self, z: &ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        self.inner.evaluate(&self.embed(z).view())
    }

    fn input_gradient(
        &self,
        z: &ArrayView1<f64>,
        class: usize,
    ) -> Result<Array1<f64>, ModelError> {
        check_input(self.num_features(), z)?;
        let full = self.inner.input_gradient(&self.embed(z).view(), class)?;
        Ok(gather(&full.view(), &self.active))
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

/// Serialized decision function. JSON with explicit layer widths and
/// row-major weight arrays; doubles survive the round trip bit for bit.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    kind: CheckpointKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<ToolMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CheckpointKind {
    Mlp {
        widths: Vec<usize>,
        /// One row-major `(widths[l + 1] * widths[l])` array per layer.
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    },
    ExpSum {
        weights: Vec<f64>,
    },
    LinearSoftmax {
        classes: usize,
        features: usize,
        /// Row-major `classes x features`.
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    LinearStub {
        weights: Vec<f64>,
        intercept: f64,
    },
}

const CHECKPOINT_FORMAT: &str = "decision-function";

/// Either kind of model a checkpoint can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Mlp(MlpModel),
    Analytic(AnalyticFunction),
}

impl StoredModel {
    pub fn as_decision_function(&self) -> &dyn DecisionFunction {
        match self {
            StoredModel::Mlp(m) => m,
            StoredModel::Analytic(a) => a,
        }
    }
}

fn to_checkpoint(model: &StoredModel) -> CheckpointKind {
    match model {
        StoredModel::Mlp(m) => CheckpointKind::Mlp {
            widths: m.widths.clone(),
            weights: m.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
        },
        StoredModel::Analytic(AnalyticFunction::ExpSum { weights }) => {
            CheckpointKind::ExpSum { weights: weights.to_vec() }
        }
        StoredModel::Analytic(AnalyticFunction::LinearSoftmax { weights, bias }) => {
            CheckpointKind::LinearSoftmax {
                classes: weights.nrows(),
                features: weights.ncols(),
                weights: weights.iter().copied().collect(),
                bias: bias.to_vec(),
            }
        }
        StoredModel::Analytic(AnalyticFunction::LinearStub { weights, intercept }) => {
            CheckpointKind::LinearStub { weights: weights.to_vec(), intercept: *intercept }
        }
    }
}

fn from_checkpoint(kind: CheckpointKind) -> Result<StoredModel, ModelError> {
    match kind {
        CheckpointKind::Mlp { widths, weights, biases } => {
            if widths.len() < 2 {
                return Err(ModelError::MalformedCheckpoint("fewer than two widths".into()));
            }
            if weights.len() != widths.len() - 1 || biases.len() != widths.len() - 1 {
                return Err(ModelError::MalformedCheckpoint(
                    "layer count does not match widths".into(),
                ));
            }
            let mut ws = Vec::with_capacity(weights.len());
            let mut bs = Vec::with_capacity(biases.len());
            for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
                let (rows, cols) = (widths[l + 1], widths[l]);
                if w.len() != rows * cols {
                    return Err(ModelError::MalformedCheckpoint(format!(
                        "layer {l} expects {rows}x{cols} weights, got {}",
                        w.len()
                    )));
                }
                if b.len() != rows {
                    return Err(ModelError::MalformedCheckpoint(format!(
                        "layer {l} expects {rows} biases, got {}",
                        b.len()
                    )));
                }
                ws.push(
                    Array2::from_shape_vec((rows, cols), w)
                        .expect("length checked above"),
                );
                bs.push(Array1::from_vec(b));
            }
            Ok(StoredModel::Mlp(MlpModel { widths, weights: ws, biases: bs }))
        }
        CheckpointKind::ExpSum { weights } => Ok(StoredModel::Analytic(
            AnalyticFunction::ExpSum { weights: Array1::from_vec(weights) },
        )),
        CheckpointKind::LinearSoftmax { classes, features, weights, bias } => {
            if weights.len() != classes * features || bias.len() != classes {
                return Err(ModelError::MalformedCheckpoint(
                    "linear softmax shape mismatch".into(),
                ));
            }
            Ok(StoredModel::Analytic(AnalyticFunction::LinearSoftmax {
                weights: Array2::from_shape_vec((classes, features), weights)
                    .expect("length checked above"),
                bias: Array1::from_vec(bias),
            }))
        }
        CheckpointKind::LinearStub { weights, intercept } => Ok(StoredModel::Analytic(
            AnalyticFunction::LinearStub { weights: Array1::from_vec(weights), intercept },
        )),
    }
}

/// Serializes a model to the checkpoint JSON text.
pub fn checkpoint_to_string(
    model: &StoredModel,
    meta: Option<&ToolMeta>,
) -> Result<String, ModelError> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        kind: to_checkpoint(model),
        meta: meta.cloned(),
    };
    serde_json::to_string_pretty(&file)
        .map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))
}

/// Parses a checkpoint from its JSON text.
pub fn checkpoint_from_str(text: &str) -> Result<StoredModel, ModelError> {
    let file: CheckpointFile = serde_json::from_str(text)
        .map_err(|e| ModelError::MalformedCheckpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ModelError::MalformedCheckpoint(format!(
            "unknown format tag {:?}",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(ModelError::MalformedCheckpoint(format!(
            "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    from_checkpoint(file.kind)
}

/// Writes a checkpoint file.
pub fn save_checkpoint(
    path: &Path,
    model: &StoredModel,
    meta: Option<&ToolMeta>,
) -> Result<(), ModelError> {
    fs::write(path, checkpoint_to_string(model, meta)?)?;
    Ok(())
}

/// Reads a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<StoredModel, ModelError> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Layout, SyntheticSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn finite_difference(
        f: &dyn DecisionFunction,
        z: &Array1<f64>,
        class: usize,
        h: f64,
    ) -> Array1<f64> {
        let mut grad = Array1::zeros(z.len());
        for i in 0..z.len() {
            let mut hi = z.clone();
            let mut lo = z.clone();
            hi[i] += h;
            lo[i] -= h;
            grad[i] = (f.evaluate(&hi.view()).unwrap()[class]
                - f.evaluate(&lo.view()).unwrap()[class])
                / (2.0 * h);
        }
        grad
    }

    #[test]
    fn evaluate_returns_a_probability_vector() {
        let m = MlpModel::new(&[4, 8, 3], 1).unwrap();
        let z = array![0.3, -1.0, 0.5, 2.0];
        let p = m.evaluate(&z.view()).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.sum() - 1.0).abs() < 1e-6, "sum = {}", p.sum());
        assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0), "entries {p:?}");
    }

    #[test]
    fn evaluate_rejects_wrong_dimension_and_class() {
        let m = MlpModel::new(&[4, 8, 3], 1).unwrap();
        assert!(matches!(
            m.evaluate(&array![1.0, 2.0].view()).unwrap_err(),
            ModelError::DimensionMismatch { expected: 4, actual: 2 }
        ));
        assert!(matches!(
            m.input_gradient(&array![0.0, 0.0, 0.0, 0.0].view(), 3).unwrap_err(),
            ModelError::ClassOutOfRange { class: 3, classes: 3 }
        ));
    }

    #[test]
    fn gradients_sum_to_zero_across_classes() {
        let m = MlpModel::new(&[5, 12, 4], 3).unwrap();
        let z = array![0.1, -0.4, 0.9, 0.0, 1.3];
        let mut total = Array1::<f64>::zeros(5);
        for c in 0..4 {
            total += &m.input_gradient(&z.view(), c).unwrap();
        }
        for v in total.iter() {
            assert!(v.abs() < 1e-6, "class-summed gradient entry {v} should vanish");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpModel::new(&[4, 10, 6, 3], 7).unwrap();
        let z = array![0.25, -0.75, 1.5, 0.1];
        for class in 0..3 {
            let exact = m.input_gradient(&z.view(), class).unwrap();
            let approx = finite_difference(&m, &z, class, 1e-4);
            let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
            for i in 0..4 {
                let rel = (exact[i] - approx[i]).abs() / scale;
                assert!(rel < 1e-4, "class {class} coord {i}: rel err {rel:e}");
            }
        }
    }

    #[test]
    fn linear_softmax_gradient_at_symmetric_point() {
        let w = array![[1.0, 2.0], [0.5, -1.0]];
        let f = AnalyticFunction::LinearSoftmax { weights: w.clone(), bias: array![0.0, 0.0] };
        // Point where both logits agree, so each probability is 1/2 and the
        // gradient is +-(w_0 - w_1) / 4.
        let z = array![0.0, 0.0];
        let expected = (&w.row(0).to_owned() - &w.row(1).to_owned()) / 4.0;
        let g0 = f.input_gradient(&z.view(), 0).unwrap();
        let g1 = f.input_gradient(&z.view(), 1).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(g0[i], expected[i], epsilon = 1e-12);
            assert_abs_diff_eq!(g1[i], -expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_sum_value_and_gradient() {
        let f = AnalyticFunction::ExpSum { weights: array![1.0, -0.5] };
        let z = array![0.2, 0.4];
        let v = f.evaluate(&z.view()).unwrap()[0];
        assert_abs_diff_eq!(v, (0.2f64 - 0.2).exp(), epsilon = 1e-15);
        let g = f.input_gradient(&z.view(), 0).unwrap();
        assert_abs_diff_eq!(g[0], v, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.5 * v, epsilon = 1e-15);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let funcs: Vec<AnalyticFunction> = vec![
            AnalyticFunction::ExpSum { weights: array![0.7, -0.3, 0.1] },
            AnalyticFunction::LinearSoftmax {
                weights: array![[0.5, -1.0, 0.2], [0.1, 0.4, -0.6]],
                bias: array![0.1, -0.2],
            },
            AnalyticFunction::LinearStub { weights: array![2.0, 0.5, -1.0], intercept: 10.0 },
        ];
        let z = array![0.3, 0.6, -0.2];
        for f in &funcs {
            for class in 0..f.num_classes() {
                let exact = f.input_gradient(&z.view(), class).unwrap();
                let approx = finite_difference(f, &z, class, 1e-5);
                let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
                for i in 0..3 {
                    assert!(
                        (exact[i] - approx[i]).abs() / scale < 1e-6,
                        "{f:?} class {class} coord {i}"
                    );
                }
            }
        }
    }

    fn two_blob_dataset(seed: u64, per_class: usize) -> LabeledDataset {
        let spec = SyntheticSpec::isotropic_blobs(
            4,
            2,
            &[0, 1],
            2.0,
            0.5,
            per_class,
            seed,
        )
        .unwrap();
        crate::data::generate(&spec).unwrap().0
    }

    #[test]
    fn zero_epochs_leaves_weights_unchanged() {
        let data = two_blob_dataset(5, 10);
        let mut m = MlpModel::new(&[4, 8, 2], 2).unwrap();
        let before = m.clone();
        let trace = train(
            &mut m,
            &data,
            &TrainConfig { epochs: 0, learning_rate: 0.1, batch_size: 4, seed: 0 },
        )
        .unwrap();
        assert!(trace.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn training_memorizes_a_single_example() {
        let features = Array2::from_shape_vec((1, 2), vec![0.5, -1.0]).unwrap();
        let data = LabeledDataset::new(features, vec![1], 2, Layout::Raw).unwrap();
        let mut m = MlpModel::new(&[2, 8, 2], 3).unwrap();
        let trace = train(
            &mut m,
            &data,
            &TrainConfig { epochs: 400, learning_rate: 0.5, batch_size: 1, seed: 0 },
        )
        .unwrap();
        let last = *trace.last().unwrap();
        assert!(last < 1e-2, "final loss {last} should be below 1e-2");
    }

    #[test]
    fn training_separates_gaussian_blobs() {
        let data = two_blob_dataset(11, 100);
        let mut m = MlpModel::new(&[4, 16, 2], 4).unwrap();
        let trace = train(
            &mut m,
            &data,
            &TrainConfig { epochs: 40, learning_rate: 0.2, batch_size: 16, seed: 1 },
        )
        .unwrap();
        let acc = accuracy(&m, &data).unwrap();
        assert!(acc > 0.95, "train accuracy {acc} should exceed 0.95");
        assert!(
            trace.last().unwrap() < &trace[0],
            "loss should drop: {:?} -> {:?}",
            trace[0],
            trace.last().unwrap()
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = two_blob_dataset(13, 30);
        let cfg = TrainConfig { epochs: 10, learning_rate: 0.2, batch_size: 8, seed: 21 };
        let mut a = MlpModel::new(&[4, 8, 2], 9).unwrap();
        let mut b = MlpModel::new(&[4, 8, 2], 9).unwrap();
        let ta = train(&mut a, &data, &cfg).unwrap();
        let tb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b, "same seeds must retrain identically");
        assert_eq!(ta, tb);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let data = two_blob_dataset(17, 20);
        let mut m = MlpModel::new(&[4, 6, 2], 8).unwrap();
        train(
            &mut m,
            &data,
            &TrainConfig { epochs: 5, learning_rate: 0.3, batch_size: 4, seed: 10 },
        )
        .unwrap();
        let text = checkpoint_to_string(&StoredModel::Mlp(m.clone()), None).unwrap();
        let restored = checkpoint_from_str(&text).unwrap();
        match restored {
            StoredModel::Mlp(r) => assert_eq!(r, m, "weights must round-trip bit for bit"),
            other => panic!("expected MLP, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_rejects_foreign_and_corrupt_input() {
        assert!(matches!(
            checkpoint_from_str("{}"),
            Err(ModelError::MalformedCheckpoint(_))
        ));
        let mut text = checkpoint_to_string(
            &StoredModel::Mlp(MlpModel::new(&[2, 3, 2], 0).unwrap()),
            None,
        )
        .unwrap();
        text = text.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            checkpoint_from_str(&text),
            Err(ModelError::MalformedCheckpoint(_))
        ));
    }

    #[test]
    fn affine_reparam_matches_direct_evaluation() {
        let m = MlpModel::new(&[3, 6, 2], 5).unwrap();
        let offset = array![0.5, -0.5, 1.0];
        let matrix = array![[1.0, 0.0, 0.0], [0.5, 2.0, 0.0], [-0.25, 0.1, 1.5]];
        let rep = AffineReparam::new(&m, offset.clone(), matrix.clone()).unwrap();
        let u = array![0.3, -0.7, 0.2];
        let z = affine_transform(&offset, &matrix, &u.view());
        assert_eq!(
            rep.evaluate(&u.view()).unwrap(),
            m.evaluate(&z.view()).unwrap()
        );
        let exact = rep.input_gradient(&u.view(), 1).unwrap();
        let approx = finite_difference(&rep, &u, 1, 1e-5);
        for i in 0..3 {
            assert_abs_diff_eq!(exact[i], approx[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn partial_input_freezes_complement() {
        let m = MlpModel::new(&[4, 8, 2], 6).unwrap();
        let template = array![1.0, 2.0, 3.0, 4.0];
        let part = PartialInputFunction::new(&m, template.clone(), vec![1, 3]).unwrap();
        let z = array![-0.5, 0.5];
        let full = array![1.0, -0.5, 3.0, 0.5];
        assert_eq!(
            part.evaluate(&z.view()).unwrap(),
            m.evaluate(&full.view()).unwrap()
        );
        let g_part = part.input_gradient(&z.view(), 0).unwrap();
        let g_full = m.input_gradient(&full.view(), 0).unwrap();
        assert_eq!(g_part[0], g_full[1]);
        assert_eq!(g_part[1], g_full[3]);
    }
}
