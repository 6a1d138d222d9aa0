//! Empirical class-covariance estimation.
//!
//! Attribution under a dependent Gaussian needs a covariance for the class
//! being explained. This module estimates one from labeled data under a
//! choice of structural scheme, then nudges it onto the SPD cone with a
//! trace-scaled diagonal jitter so that a Cholesky factor always exists.
//!
//! Estimates use the unbiased divisor `m - 1`; a single-example class
//! degenerates to the zero matrix, which the jitter then regularizes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::gaussian::{GaussianError, SpdMatrix};
use crate::ToolMeta;

/// Default jitter coefficient for [`regularize_spd`].
pub const DEFAULT_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CovarianceError {
    #[error("class {class} has no examples")]
    EmptyClass { class: usize },
    #[error("scheme does not fit the data: {0}")]
    SchemeMismatch(String),
    #[error("matrix is still not positive definite after jitter {jitter:e}")]
    StillNotPositiveDefinite { jitter: f64 },
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("covariance file is malformed: {0}")]
    MalformedFile(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for CovarianceError {
    fn from(e: std::io::Error) -> Self {
        CovarianceError::Io(e.to_string())
    }
}

/// Structural family for an estimated covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum CovarianceScheme {
    /// Dense `d x d` matrix.
    Full,
    /// One `block x block` matrix shared by `groups` consecutive feature
    /// blocks (channel planes of an image, token positions of a sequence).
    /// Requires `block * groups = d`.
    SharedBlock { block: usize, groups: usize },
    /// Per-feature variances on the diagonal, zeros elsewhere.
    Diagonal,
    /// `sigma_sq * I`, ignoring the data.
    Identity { sigma_sq: f64 },
}

impl CovarianceScheme {
    /// Short tag used in file headers and reports.
    pub fn tag(&self) -> String {
        match self {
            CovarianceScheme::Full => "full".to_string(),
            CovarianceScheme::SharedBlock { block, groups } => {
                format!("shared-block:b={block},g={groups}")
            }
            CovarianceScheme::Diagonal => "diagonal".to_string(),
            CovarianceScheme::Identity { sigma_sq } => format!("identity:sigma_sq={sigma_sq}"),
        }
    }

    /// Side length of the matrix the scheme produces for `d` features.
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            CovarianceScheme::SharedBlock { block, .. } => *block,
            _ => d,
        }
    }
}

impl std::str::FromStr for CovarianceScheme {
    type Err = CovarianceError;

    /// Parses the same tags [`CovarianceScheme::tag`] produces:
    /// `full`, `diagonal`, `shared-block:b=4,g=3`, `identity:sigma_sq=1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || CovarianceError::InvalidScheme(format!("unrecognized scheme {s:?}"));
        match s {
            "full" => return Ok(CovarianceScheme::Full),
            "diagonal" => return Ok(CovarianceScheme::Diagonal),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("shared-block:") {
            let mut block = None;
            let mut groups = None;
            for part in rest.split(',') {
                if let Some(v) = part.strip_prefix("b=") {
                    block = v.parse::<usize>().ok();
                } else if let Some(v) = part.strip_prefix("g=") {
                    groups = v.parse::<usize>().ok();
                } else {
                    return Err(invalid());
                }
            }
            return match (block, groups) {
                (Some(block), Some(groups)) => Ok(CovarianceScheme::SharedBlock { block, groups }),
                _ => Err(invalid()),
            };
        }
        if let Some(v) = s.strip_prefix("identity:sigma_sq=") {
            let sigma_sq = v.parse::<f64>().map_err(|_| invalid())?;
            return Ok(CovarianceScheme::Identity { sigma_sq });
        }
        Err(invalid())
    }
}

/// Unbiased sample covariance of the selected rows. One row yields zeros.
fn sample_covariance(rows: &[usize], data: &LabeledDataset, cols: std::ops::Range<usize>) -> Array2<f64> {
    let m = rows.len();
    let d = cols.len();
    let features = data.features();
    let mut mean = Array1::<f64>::zeros(d);
    for &r in rows {
        for (j, c) in cols.clone().enumerate() {
            mean[j] += features[[r, c]];
        }
    }
    mean /= m as f64;
    let mut cov = Array2::<f64>::zeros((d, d));
    if m < 2 {
        return cov;
    }
    for &r in rows {
        for (i, ci) in cols.clone().enumerate() {
            let di = features[[r, ci]] - mean[i];
            for (j, cj) in cols.clone().enumerate().skip(i) {
                let dj = features[[r, cj]] - mean[j];
                cov[[i, j]] += di * dj;
            }
        }
    }
    let divisor = (m - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[[i, j]] /= divisor;
            cov[[j, i]] = cov[[i, j]];
        }
    }
    cov
}

/// Estimates a covariance under the scheme from the rows of `class`, or from
/// every row when `class` is `None` (the pooled variant).
///
/// Full, Diagonal and Identity produce `d x d` matrices; SharedBlock
/// produces the `block x block` average over the feature groups. The raw
/// estimate is passed through [`regularize_spd`] with the given jitter
/// coefficient before it is returned.
pub fn estimate_covariance(
    data: &LabeledDataset,
    class: Option<usize>,
    scheme: CovarianceScheme,
    jitter: f64,
) -> Result<SpdMatrix, CovarianceError> {
    let rows: Vec<usize> = match class {
        Some(c) => {
            let rows = data.class_indices(c);
            if rows.is_empty() {
                return Err(CovarianceError::EmptyClass { class: c });
            }
            rows
        }
        None => (0..data.num_examples()).collect(),
    };
    let d = data.dim();
    let raw = match scheme {
        CovarianceScheme::Full => sample_covariance(&rows, data, 0..d),
        CovarianceScheme::SharedBlock { block, groups } => {
            if block == 0 || groups == 0 || block * groups != d {
                return Err(CovarianceError::SchemeMismatch(format!(
                    "shared-block needs block * groups = {d}, got {block} * {groups}"
                )));
            }
            let mut acc = Array2::<f64>::zeros((block, block));
            for g in 0..groups {
                acc += &sample_covariance(&rows, data, g * block..(g + 1) * block);
            }
            acc / groups as f64
        }
        CovarianceScheme::Diagonal => {
            let full = sample_covariance(&rows, data, 0..d);
            Array2::from_diag(&full.diag().to_owned())
        }
        CovarianceScheme::Identity { sigma_sq } => {
            if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
                return Err(CovarianceError::InvalidScheme(format!(
                    "identity scale must be positive, got {sigma_sq}"
                )));
            }
            Array2::eye(d) * sigma_sq
        }
    };
    regularize_spd(raw, jitter)
}

/// Estimates the covariance of one class; see [`estimate_covariance`].
pub fn estimate_class_covariance(
    data: &LabeledDataset,
    class: usize,
    scheme: CovarianceScheme,
    jitter: f64,
) -> Result<SpdMatrix, CovarianceError> {
    estimate_covariance(data, Some(class), scheme, jitter)
}

/// Adds `eps * I` with `eps = jitter * trace / d` (or `eps = jitter` when the
/// trace is not positive) and verifies that the result factors. With jitter
/// zero an already-SPD input comes back unchanged.
pub fn regularize_spd(mut m: Array2<f64>, jitter: f64) -> Result<SpdMatrix, CovarianceError> {
    if !(jitter.is_finite() && jitter >= 0.0) {
        return Err(CovarianceError::InvalidScheme(format!(
            "jitter must be non-negative, got {jitter}"
        )));
    }
    let d = m.nrows();
    let trace: f64 = m.diag().sum();
    let eps = if jitter > 0.0 && trace > 0.0 { jitter * trace / d as f64 } else { jitter };
    for i in 0..d {
        m[[i, i]] += eps;
    }
    let spd = SpdMatrix::new(m)?;
    if spd.factor().is_err() {
        return Err(CovarianceError::StillNotPositiveDefinite { jitter });
    }
    Ok(spd)
}

/// Embeds a shared `block x block` covariance as the block-diagonal
/// `d x d` matrix with `groups` copies on the diagonal.
pub fn expand_shared_block(block: &SpdMatrix, groups: usize) -> Result<SpdMatrix, CovarianceError> {
    let b = block.dim();
    let d = b * groups;
    if groups == 0 {
        return Err(CovarianceError::InvalidScheme("need at least one group".into()));
    }
    let mut out = Array2::<f64>::zeros((d, d));
    for g in 0..groups {
        out.slice_mut(ndarray::s![g * b..(g + 1) * b, g * b..(g + 1) * b])
            .assign(block.entries());
    }
    Ok(SpdMatrix::new(out)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CovarianceFile {
    scheme: String,
    dim: usize,
    /// Row-major entries.
    entries: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<ToolMeta>,
}

/// Writes a covariance with its scheme tag as structured text (JSON).
pub fn save_covariance(
    path: &Path,
    cov: &SpdMatrix,
    scheme_tag: &str,
    meta: Option<&ToolMeta>,
) -> Result<(), CovarianceError> {
    let file = CovarianceFile {
        scheme: scheme_tag.to_string(),
        dim: cov.dim(),
        entries: cov.entries().iter().copied().collect(),
        meta: meta.cloned(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| CovarianceError::MalformedFile(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads a covariance and its scheme tag back.
pub fn load_covariance(path: &Path) -> Result<(SpdMatrix, String), CovarianceError> {
    let text = fs::read_to_string(path)?;
    let file: CovarianceFile =
        serde_json::from_str(&text).map_err(|e| CovarianceError::MalformedFile(e.to_string()))?;
    if file.entries.len() != file.dim * file.dim {
        return Err(CovarianceError::MalformedFile(format!(
            "{} entries for a {}x{} matrix",
            file.entries.len(),
            file.dim,
            file.dim
        )));
    }
    let m = Array2::from_shape_vec((file.dim, file.dim), file.entries)
        .expect("length checked above");
    Ok((SpdMatrix::new(m)?, file.scheme))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Layout;
    use crate::gaussian::GaussianMeasure;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use tempfile::tempdir;

    fn two_point_dataset() -> LabeledDataset {
        LabeledDataset::new(array![[0.0, 0.0], [2.0, 2.0]], vec![0, 0], 1, Layout::Raw).unwrap()
    }

    #[test]
    fn full_covariance_of_two_points() {
        let data = two_point_dataset();
        // The unbiased estimate is [[2, 2], [2, 2]]; the jitter shifts the
        // diagonal by jitter * trace / d = 2e-6 and guarantees a factor.
        let cov = estimate_class_covariance(&data, 0, CovarianceScheme::Full, 1e-6).unwrap();
        let eps = 1e-6 * 4.0 / 2.0;
        assert_abs_diff_eq!(cov.entries()[[0, 0]], 2.0 + eps, epsilon = 1e-12);
        assert_abs_diff_eq!(cov.entries()[[0, 1]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cov.entries()[[1, 1]], 2.0 + eps, epsilon = 1e-12);
        assert!(cov.factor().is_ok(), "jittered rank-one matrix must factor");
    }

    #[test]
    fn single_example_class_gives_jittered_zero_matrix() {
        let data = LabeledDataset::new(
            array![[1.0, 2.0], [5.0, -1.0]],
            vec![0, 1],
            2,
            Layout::Raw,
        )
        .unwrap();
        let cov = estimate_class_covariance(&data, 0, CovarianceScheme::Full, 1e-6).unwrap();
        // Zero matrix has zero trace, so the jitter lands directly.
        assert_eq!(cov.entries(), &(Array2::<f64>::eye(2) * 1e-6));
    }

    #[test]
    fn empty_class_is_reported() {
        let data = two_point_dataset();
        assert_eq!(
            estimate_class_covariance(&data, 1, CovarianceScheme::Full, 0.0).unwrap_err(),
            CovarianceError::EmptyClass { class: 1 }
        );
    }

    #[test]
    fn shared_block_averages_channel_planes() {
        // Two examples of a 2x2x3 channel-planar image: 3 groups of 4.
        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..12).map(|i| (i * i) as f64 * 0.1).collect();
        let features = Array2::from_shape_vec(
            (2, 12),
            a.iter().chain(b.iter()).copied().collect(),
        )
        .unwrap();
        let data = LabeledDataset::new(features, vec![0, 0], 1, Layout::Raw).unwrap();

        let shared = estimate_class_covariance(
            &data,
            0,
            CovarianceScheme::SharedBlock { block: 4, groups: 3 },
            0.0,
        );
        // Rank-deficient with two examples; compare the raw average instead
        // through a jittered estimate's off-diagonal entries.
        let shared = match shared {
            Err(CovarianceError::StillNotPositiveDefinite { .. }) => {
                estimate_class_covariance(
                    &data,
                    0,
                    CovarianceScheme::SharedBlock { block: 4, groups: 3 },
                    1e-9,
                )
                .unwrap()
            }
            Ok(s) => s,
            Err(other) => panic!("unexpected error {other:?}"),
        };
        assert_eq!(shared.dim(), 4);

        // Oracle: average the three per-channel unbiased covariances.
        let mut expected = Array2::<f64>::zeros((4, 4));
        for g in 0..3 {
            let mut mean = [0.0f64; 4];
            for (j, m) in mean.iter_mut().enumerate() {
                *m = (data.features()[[0, g * 4 + j]] + data.features()[[1, g * 4 + j]]) / 2.0;
            }
            for i in 0..4 {
                for j in 0..4 {
                    let di0 = data.features()[[0, g * 4 + i]] - mean[i];
                    let dj0 = data.features()[[0, g * 4 + j]] - mean[j];
                    let di1 = data.features()[[1, g * 4 + i]] - mean[i];
                    let dj1 = data.features()[[1, g * 4 + j]] - mean[j];
                    expected[[i, j]] += (di0 * dj0 + di1 * dj1) / 1.0;
                }
            }
        }
        expected /= 3.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_abs_diff_eq!(
                        shared.entries()[[i, j]],
                        expected[[i, j]],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn shared_block_rejects_bad_shape() {
        let data = two_point_dataset();
        assert!(matches!(
            estimate_class_covariance(
                &data,
                0,
                CovarianceScheme::SharedBlock { block: 3, groups: 1 },
                0.0
            ),
            Err(CovarianceError::SchemeMismatch(_))
        ));
    }

    #[test]
    fn diagonal_scheme_zeroes_off_diagonals() {
        let data = two_point_dataset();
        let cov =
            estimate_class_covariance(&data, 0, CovarianceScheme::Diagonal, 0.0).unwrap();
        assert_abs_diff_eq!(cov.entries()[[0, 0]], 2.0, epsilon = 1e-12);
        assert_eq!(cov.entries()[[0, 1]], 0.0);
        assert_eq!(cov.entries()[[1, 0]], 0.0);
    }

    #[test]
    fn identity_scheme_ignores_data() {
        let data = two_point_dataset();
        let cov = estimate_class_covariance(
            &data,
            0,
            CovarianceScheme::Identity { sigma_sq: 0.3 },
            0.0,
        )
        .unwrap();
        assert_eq!(cov.entries(), &(Array2::<f64>::eye(2) * 0.3));
    }

    #[test]
    fn regularize_zero_matrix_with_jitter() {
        let out = regularize_spd(Array2::zeros((3, 3)), 1e-6).unwrap();
        assert_eq!(out.entries(), &(Array2::<f64>::eye(3) * 1e-6));
    }

    #[test]
    fn regularize_spd_with_zero_jitter_is_identity_map() {
        let m = array![[2.0, 0.5], [0.5, 1.0]];
        let out = regularize_spd(m.clone(), 0.0).unwrap();
        assert_eq!(out.entries(), &m, "no jitter, no change");
    }

    #[test]
    fn regularize_makes_rank_one_factorable() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            regularize_spd(m.clone(), 0.0),
            Err(CovarianceError::StillNotPositiveDefinite { .. })
        ));
        let out = regularize_spd(m, 1e-6).unwrap();
        assert!(out.factor().is_ok());
    }

    #[test]
    fn pooled_estimate_uses_all_rows() {
        let data = LabeledDataset::new(
            array![[0.0, 0.0], [2.0, 2.0], [4.0, 4.0]],
            vec![0, 1, 1],
            2,
            Layout::Raw,
        )
        .unwrap();
        let pooled = estimate_covariance(&data, None, CovarianceScheme::Diagonal, 0.0).unwrap();
        assert_abs_diff_eq!(pooled.entries()[[0, 0]], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_converges_on_iid_draws() {
        let d = 4;
        let truth = SpdMatrix::new(array![
            [2.0, 0.6, 0.2, 0.0],
            [0.6, 1.5, 0.4, 0.1],
            [0.2, 0.4, 1.0, 0.3],
            [0.0, 0.1, 0.3, 0.8]
        ])
        .unwrap();
        let g = GaussianMeasure::full(Array1::zeros(d), truth.clone()).unwrap();
        let m = 500 * d;
        let draws = g.sample(m, 42).unwrap();
        let data = LabeledDataset::new(draws, vec![0; m], 1, Layout::Raw).unwrap();
        let est = estimate_class_covariance(&data, 0, CovarianceScheme::Full, 0.0).unwrap();

        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                let diff = est.entries()[[i, j]] - truth.entries()[[i, j]];
                num += diff * diff;
                den += truth.entries()[[i, j]] * truth.entries()[[i, j]];
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.10, "relative Frobenius error {rel:.3} at m = 500 d");
    }

    #[test]
    fn expand_shared_block_builds_block_diagonal() {
        let block = SpdMatrix::new(array![[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let full = expand_shared_block(&block, 2).unwrap();
        assert_eq!(full.dim(), 4);
        assert_eq!(full.entries()[[0, 1]], 0.5);
        assert_eq!(full.entries()[[2, 3]], 0.5);
        assert_eq!(full.entries()[[0, 2]], 0.0);
        assert_eq!(full.entries()[[1, 3]], 0.0);
    }

    #[test]
    fn covariance_file_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cov.json");
        let cov = SpdMatrix::new(array![[2.0, 0.5], [0.5, 1.0]]).unwrap();
        save_covariance(&path, &cov, "full", None).unwrap();
        let (back, tag) = load_covariance(&path).unwrap();
        assert_eq!(back.entries(), cov.entries());
        assert_eq!(tag, "full");
    }

    #[test]
    fn scheme_tags_parse_back_to_themselves() {
        let schemes = [
            CovarianceScheme::Full,
            CovarianceScheme::Diagonal,
            CovarianceScheme::SharedBlock { block: 4, groups: 3 },
            CovarianceScheme::Identity { sigma_sq: 0.25 },
        ];
        for s in schemes {
            let parsed: CovarianceScheme = s.tag().parse().unwrap();
            assert_eq!(parsed, s, "tag {:?} did not round-trip", s.tag());
        }
        assert!("banana".parse::<CovarianceScheme>().is_err());
        assert!("shared-block:b=4".parse::<CovarianceScheme>().is_err());
        assert!("identity:sigma_sq=squash".parse::<CovarianceScheme>().is_err());
    }
}
