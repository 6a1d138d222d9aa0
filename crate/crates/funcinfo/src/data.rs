//! Synthetic Gaussian class datasets and dataset file I/O.
//!
//! A dataset is a dense feature matrix with one integer label per row and an
//! optional modality tag describing how the flat feature vector should be
//! read: a raw vector, a channel-planar image grid, or a sequence of token
//! rows. The on-disk form is a plain numeric CSV whose last column is the
//! label; the modality tag travels in a small JSON sidecar file. Floats are
//! written with 17 significant digits after the decimal point, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussianError, GaussianMeasure, SpdMatrix};
use crate::rng::stream_rng;
use crate::ToolMeta;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Image grid dimensions for a channel-planar flat vector: all of channel 0
/// first (row major), then channel 1, and so on. `d = height * width *
/// channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageLayout {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageLayout {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Token-sequence dimensions for a flat vector laid out token by token:
/// `d = tokens * dims`, with token `t` occupying `t * dims .. (t + 1) * dims`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub tokens: usize,
    pub dims: usize,
}

impl TokenLayout {
    pub fn len(&self) -> usize {
        self.tokens * self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How a flat feature vector should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layout {
    Raw,
    Image(ImageLayout),
    Tokens(TokenLayout),
}

impl Layout {
    /// Expected feature count, if the layout pins one down.
    pub fn expected_len(&self) -> Option<usize> {
        match self {
            Layout::Raw => None,
            Layout::Image(img) => Some(img.len()),
            Layout::Tokens(tok) => Some(tok.len()),
        }
    }
}

/// Dense labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    layout: Layout,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        layout: Layout,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidDataset("non-finite feature value".into()));
        }
        if num_classes == 0 {
            return Err(DataError::InvalidDataset("need at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::InvalidDataset(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if let Some(expected) = layout.expected_len() {
            if features.ncols() != expected {
                return Err(DataError::InvalidLayout(format!(
                    "layout expects {expected} features, matrix has {}",
                    features.ncols()
                )));
            }
        }
        Ok(Self { features, labels, num_classes, layout })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_examples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Row indices carrying the given label.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    /// Largest minus smallest feature value over the whole matrix.
    pub fn feature_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in self.features.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Per-class covariance specification for the generator.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassCovariance {
    /// One covariance shared by every class.
    Shared(SpdMatrix),
    /// One covariance per class, indexed by label.
    PerClass(Vec<SpdMatrix>),
}

/// Recipe for a synthetic Gaussian classification dataset: class `y` draws
/// from `N(mean_y, S_y)`. Class means may differ only on the listed
/// informative coordinates, which is what makes the ground-truth feature
/// mask meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    /// Informative coordinate set per class.
    pub informative: Vec<Vec<usize>>,
    /// One mean vector per class.
    pub class_means: Vec<Array1<f64>>,
    pub covariance: ClassCovariance,
    pub examples_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Convenience builder: every class is isotropic `N(mean_y, var * I)`,
    /// class `y` gets `+-separation` on the shared informative coordinates
    /// (sign alternating by class), and all other coordinates sit at zero.
    pub fn isotropic_blobs(
        dim: usize,
        classes: usize,
        informative: &[usize],
        separation: f64,
        var: f64,
        examples_per_class: usize,
        seed: u64,
    ) -> Result<Self, DataError> {
        let mut class_means = Vec::with_capacity(classes);
        for y in 0..classes {
            let mut mean = Array1::zeros(dim);
            let sign = if y % 2 == 0 { -1.0 } else { 1.0 };
            let scale = 1.0 + (y / 2) as f64;
            for &i in informative {
                if i >= dim {
                    return Err(DataError::InvalidSpec(format!(
                        "informative index {i} out of range for dimension {dim}"
                    )));
                }
                mean[i] = sign * scale * separation;
            }
            class_means.push(mean);
        }
        let eye = SpdMatrix::new(Array2::eye(dim) * var)
            .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        let spec = Self {
            dim,
            classes,
            informative: vec![informative.to_vec(); classes],
            class_means,
            covariance: ClassCovariance::Shared(eye),
            examples_per_class,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes == 0 {
            return Err(DataError::InvalidSpec("need at least one class".into()));
        }
        if self.examples_per_class == 0 {
            return Err(DataError::InvalidSpec("need at least one example per class".into()));
        }
        if self.informative.len() != self.classes || self.class_means.len() != self.classes {
            return Err(DataError::InvalidSpec(
                "informative sets and means must list one entry per class".into(),
            ));
        }
        for mean in &self.class_means {
            if mean.len() != self.dim {
                return Err(DataError::InvalidSpec(format!(
                    "class mean has length {}, expected {}",
                    mean.len(),
                    self.dim
                )));
            }
        }
        for set in &self.informative {
            if let Some(&bad) = set.iter().find(|&&i| i >= self.dim) {
                return Err(DataError::InvalidSpec(format!(
                    "informative index {bad} out of range for dimension {}",
                    self.dim
                )));
            }
        }
        match &self.covariance {
            ClassCovariance::Shared(s) => {
                if s.dim() != self.dim {
                    return Err(DataError::InvalidSpec(format!(
                        "shared covariance is {}x{0}, expected {1}x{1}",
                        s.dim(),
                        self.dim
                    )));
                }
            }
            ClassCovariance::PerClass(list) => {
                if list.len() != self.classes {
                    return Err(DataError::InvalidSpec(
                        "per-class covariances must list one matrix per class".into(),
                    ));
                }
                if let Some(s) = list.iter().find(|s| s.dim() != self.dim) {
                    return Err(DataError::InvalidSpec(format!(
                        "per-class covariance is {}x{0}, expected {1}x{1}",
                        s.dim(),
                        self.dim
                    )));
                }
            }
        }
        // Coordinates outside every informative set must not separate the
        // classes; otherwise the ground-truth mask would be a lie.
        let mask = self.informative_mask();
        for i in 0..self.dim {
            if mask[i] {
                continue;
            }
            let first = self.class_means[0][i];
            if self.class_means.iter().any(|m| m[i] != first) {
                return Err(DataError::InvalidSpec(format!(
                    "class means differ at non-informative coordinate {i}"
                )));
            }
        }
        Ok(())
    }

    /// Union of the per-class informative sets as a boolean mask.
    pub fn informative_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dim];
        for set in &self.informative {
            for &i in set {
                if i < self.dim {
                    mask[i] = true;
                }
            }
        }
        mask
    }

    fn class_covariance(&self, class: usize) -> &SpdMatrix {
        match &self.covariance {
            ClassCovariance::Shared(s) => s,
            ClassCovariance::PerClass(list) => &list[class],
        }
    }
}

/// Draws the dataset described by `spec` plus its ground-truth informative
/// mask. Rows are grouped by class, class `y` drawn from stream `y` of the
/// spec seed, so the output is a pure function of the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<(LabeledDataset, Vec<bool>), DataError> {
    spec.validate()?;
    let m = spec.examples_per_class;
    let mut features = Array2::zeros((m * spec.classes, spec.dim));
    let mut labels = Vec::with_capacity(m * spec.classes);
    for y in 0..spec.classes {
        let measure = GaussianMeasure::full(
            spec.class_means[y].clone(),
            spec.class_covariance(y).clone(),
        )?;
        let mut rng = stream_rng(spec.seed, y as u64);
        let draws = measure.sample_with(&mut rng, m)?;
        features
            .slice_mut(ndarray::s![y * m..(y + 1) * m, ..])
            .assign(&draws);
        labels.extend(std::iter::repeat_n(y, m));
    }
    let dataset = LabeledDataset::new(features, labels, spec.classes, Layout::Raw)?;
    Ok((dataset, spec.informative_mask()))
}

/// Formats a double with enough digits to survive parsing unchanged.
pub fn format_float(v: f64) -> String {
    format!("{v:.17e}")
}

/// Writes the dataset as CSV: feature columns then the integer label.
pub fn save_csv(path: &Path, data: &LabeledDataset) -> Result<(), DataError> {
    let mut out = String::new();
    for (row, &label) in data.features.rows().into_iter().zip(&data.labels) {
        for v in row.iter() {
            out.push_str(&format_float(*v));
            out.push(',');
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset CSV written by [`save_csv`] or any well-formed numeric
/// CSV whose last column is a non-negative integer label. The class count is
/// the largest label plus one; the layout is [`Layout::Raw`] (attach a
/// sidecar layout with [`load_layout`] if there is one).
pub fn load_csv(path: &Path) -> Result<LabeledDataset, DataError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width = None;
    for (r, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(DataError::Parse {
                row: r,
                col: 0,
                message: "need at least one feature column and a label".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(DataError::Parse {
                    row: r,
                    col: fields.len().saturating_sub(1),
                    message: format!("expected {w} columns, found {}", fields.len()),
                });
            }
            Some(_) => {}
        }
        let mut values = Vec::with_capacity(fields.len() - 1);
        for (c, field) in fields[..fields.len() - 1].iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|e| DataError::Parse {
                row: r,
                col: c,
                message: format!("bad float {field:?}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    row: r,
                    col: c,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        let label_field = fields[fields.len() - 1].trim();
        let label: usize = label_field.parse().map_err(|e| DataError::Parse {
            row: r,
            col: fields.len() - 1,
            message: format!("bad label {label_field:?}: {e}"),
        })?;
        rows.push(values);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(DataError::Parse { row: 0, col: 0, message: "no data rows".into() });
    }
    let d = width.expect("rows exist") - 1;
    let mut features = Array2::zeros((rows.len(), d));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    LabeledDataset::new(features, labels, num_classes, Layout::Raw)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutFile {
    layout: Layout,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<ToolMeta>,
}

/// Writes the layout sidecar for a dataset file.
pub fn save_layout(path: &Path, layout: Layout, meta: Option<&ToolMeta>) -> Result<(), DataError> {
    let file = LayoutFile { layout, meta: meta.cloned() };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| DataError::InvalidLayout(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads a layout sidecar.
pub fn load_layout(path: &Path) -> Result<Layout, DataError> {
    let text = fs::read_to_string(path)?;
    let file: LayoutFile = serde_json::from_str(&text).map_err(|e| DataError::Parse {
        row: 0,
        col: 0,
        message: format!("bad layout file: {e}"),
    })?;
    Ok(file.layout)
}
