//! Dense symmetric-positive-definite linear algebra and multivariate
//! Gaussian measures.
//!
//! The central convention: wherever a square root of a covariance matrix is
//! needed, this module uses the lower-triangular Cholesky factor `L` with
//! `L * L^T = S`. Sampling maps a standard normal vector `u` to
//! `mean + L * u`, conditioning solves against the factor of the observed
//! block, and log-densities reuse the factor for both the quadratic form and
//! the determinant. Factors are computed once per matrix and cached.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::{fill_standard_normal, stream_rng};

/// Relative tolerance for the symmetry check on SPD matrix construction.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("matrix is not positive definite (pivot {pivot} is not positive)")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is not symmetric within relative tolerance {SYMMETRY_TOL:e}")]
    NotSymmetric,
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entries must be finite")]
    NotFinite,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("operation requires a full covariance matrix")]
    RequiresFullCovariance,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
}

/// Symmetric positive-definite matrix with a lazily cached Cholesky factor.
///
/// Construction validates shape, finiteness and symmetry (relative tolerance
/// [`SYMMETRY_TOL`]) and then stores the symmetrized matrix `(M + M^T) / 2`.
/// Positive definiteness is only established when a factor is first
/// requested; the outcome, success or failure, is cached and shared.
#[derive(Debug)]
pub struct SpdMatrix {
    entries: Array2<f64>,
    factor: OnceLock<Result<Array2<f64>, GaussianError>>,
}

impl Clone for SpdMatrix {
    fn clone(&self) -> Self {
        let factor = OnceLock::new();
        if let Some(cached) = self.factor.get() {
            let _ = factor.set(cached.clone());
        }
        Self { entries: self.entries.clone(), factor }
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl SpdMatrix {
    /// Validates and symmetrizes `m`.
    pub fn new(m: Array2<f64>) -> Result<Self, GaussianError> {
        let (rows, cols) = m.dim();
        if rows != cols {
            return Err(GaussianError::NotSquare { rows, cols });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NotFinite);
        }
        let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..rows {
            for j in (i + 1)..cols {
                if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(GaussianError::NotSymmetric);
                }
            }
        }
        let entries = (&m + &m.t()) / 2.0;
        Ok(Self { entries, factor: OnceLock::new() })
    }

    /// Identity matrix of the given dimension.
    pub fn identity(dim: usize) -> Self {
        Self { entries: Array2::eye(dim), factor: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Lower-triangular `L` with `L * L^T` equal to this matrix.
    ///
    /// The factorization runs at most once; concurrent callers observe the
    /// same cached result. Fails with [`GaussianError::NotPositiveDefinite`]
    /// when a pivot is not strictly positive.
    pub fn factor(&self) -> Result<&Array2<f64>, GaussianError> {
        self.factor
            .get_or_init(|| cholesky_lower(&self.entries))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Matrix-vector product with the stored entries.
    pub fn matvec(&self, v: &ArrayView1<f64>) -> Array1<f64> {
        self.entries.dot(v)
    }

    /// Sum of the diagonal entries.
    pub fn trace(&self) -> f64 {
        self.entries.diag().sum()
    }
}

/// Textbook lower Cholesky factorization; errors on a non-positive pivot.
fn cholesky_lower(m: &Array2<f64>) -> Result<Array2<f64>, GaussianError> {
    let d = m.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(GaussianError::NotPositiveDefinite { pivot: i });
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L * y = b` for lower-triangular `L` by forward substitution.
pub fn forward_substitute(l: &Array2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let d = l.nrows();
    let mut y = Array1::<f64>::zeros(d);
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// `offset + matrix * u`.
///
/// Sampling and reparametrized model evaluation both route through this
/// helper so that the two sides of a change of variables see bit-identical
/// points.
pub fn affine_transform(
    offset: &Array1<f64>,
    matrix: &Array2<f64>,
    u: &ArrayView1<f64>,
) -> Array1<f64> {
    let mut out = matrix.dot(u);
    out += offset;
    out
}

/// Index split of `0..dim` into a non-empty subset and its non-empty
/// complement. Both halves are kept in the caller-supplied order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    subset: Vec<usize>,
    complement: Vec<usize>,
}

impl Partition {
    /// Builds a partition from both halves, checking that they are disjoint,
    /// non-empty, and cover `0..subset.len() + complement.len()`.
    pub fn new(subset: Vec<usize>, complement: Vec<usize>) -> Result<Self, GaussianError> {
        if subset.is_empty() || complement.is_empty() {
            return Err(GaussianError::InvalidPartition(
                "both index sets must be non-empty".into(),
            ));
        }
        let dim = subset.len() + complement.len();
        let mut seen = vec![false; dim];
        for &i in subset.iter().chain(complement.iter()) {
            if i >= dim {
                return Err(GaussianError::InvalidPartition(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if seen[i] {
                return Err(GaussianError::InvalidPartition(format!("index {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(Self { subset, complement })
    }

    /// Partition of `0..dim` given only the subset; the complement is the
    /// remaining indices in increasing order.
    pub fn complementary(dim: usize, subset: Vec<usize>) -> Result<Self, GaussianError> {
        let mut in_subset = vec![false; dim];
        for &i in &subset {
            if i >= dim {
                return Err(GaussianError::InvalidPartition(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if in_subset[i] {
                return Err(GaussianError::InvalidPartition(format!("index {i} repeated")));
            }
            in_subset[i] = true;
        }
        let complement: Vec<usize> = (0..dim).filter(|&i| !in_subset[i]).collect();
        Self::new(subset, complement)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn dim(&self) -> usize {
        self.subset.len() + self.complement.len()
    }
}

/// Covariance of a Gaussian measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Arbitrary SPD matrix.
    Full(SpdMatrix),
    /// Independent coordinates with per-coordinate variances.
    Diagonal(Array1<f64>),
    /// `variance * I`.
    ScaledIdentity(f64),
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Array1<f64>,
    covariance: Covariance,
}

impl GaussianMeasure {
    pub fn new(mean: Array1<f64>, covariance: Covariance) -> Result<Self, GaussianError> {
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NotFinite);
        }
        match &covariance {
            Covariance::Full(s) => {
                if s.dim() != mean.len() {
                    return Err(GaussianError::DimensionMismatch {
                        expected: mean.len(),
                        actual: s.dim(),
                    });
                }
            }
            Covariance::Diagonal(v) => {
                if v.len() != mean.len() {
                    return Err(GaussianError::DimensionMismatch {
                        expected: mean.len(),
                        actual: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                    return Err(GaussianError::NonPositiveVariance(
                        v.iter().copied().find(|x| !x.is_finite() || *x <= 0.0).unwrap_or(0.0),
                    ));
                }
            }
            Covariance::ScaledIdentity(var) => {
                if !var.is_finite() || *var <= 0.0 {
                    return Err(GaussianError::NonPositiveVariance(*var));
                }
            }
        }
        Ok(Self { mean, covariance })
    }

    /// `N(mean, I)`.
    pub fn standard(mean: Array1<f64>) -> Result<Self, GaussianError> {
        Self::new(mean, Covariance::ScaledIdentity(1.0))
    }

    /// `N(mean, variance * I)`.
    pub fn isotropic(mean: Array1<f64>, variance: f64) -> Result<Self, GaussianError> {
        Self::new(mean, Covariance::ScaledIdentity(variance))
    }

    /// `N(mean, diag(variances))`.
    pub fn diagonal(mean: Array1<f64>, variances: Array1<f64>) -> Result<Self, GaussianError> {
        Self::new(mean, Covariance::Diagonal(variances))
    }

    /// `N(mean, S)` for a full SPD matrix.
    pub fn full(mean: Array1<f64>, s: SpdMatrix) -> Result<Self, GaussianError> {
        Self::new(mean, Covariance::Full(s))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    /// Applies the covariance to a vector (`S * v`).
    pub fn covariance_apply(&self, v: &ArrayView1<f64>) -> Result<Array1<f64>, GaussianError> {
        if v.len() != self.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(match &self.covariance {
            Covariance::Full(s) => s.matvec(v),
            Covariance::Diagonal(d) => {
                Array1::from_iter(v.iter().zip(d.iter()).map(|(x, s)| s * x))
            }
            Covariance::ScaledIdentity(var) => v.mapv(|x| var * x),
        })
    }

    /// Maps a standard normal vector `u` to a draw `mean + sqrt(S) * u`,
    /// where `sqrt(S)` is the lower Cholesky factor for full covariances and
    /// the elementwise root for diagonal ones.
    pub fn transform_standard(&self, u: &ArrayView1<f64>) -> Result<Array1<f64>, GaussianError> {
        if u.len() != self.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                actual: u.len(),
            });
        }
        Ok(match &self.covariance {
            Covariance::Full(s) => affine_transform(&self.mean, s.factor()?, u),
            Covariance::Diagonal(d) => {
                let mut out = Array1::zeros(self.dim());
                for i in 0..self.dim() {
                    out[i] = self.mean[i] + d[i].sqrt() * u[i];
                }
                out
            }
            Covariance::ScaledIdentity(var) => {
                let sd = var.sqrt();
                let mut out = Array1::zeros(self.dim());
                for i in 0..self.dim() {
                    out[i] = self.mean[i] + sd * u[i];
                }
                out
            }
        })
    }

    /// Draws `n` samples with a fresh generator for `(seed, stream 0)`;
    /// same seed, same bits. Rows of the result are draws.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<f64>, GaussianError> {
        let mut rng = stream_rng(seed, 0);
        self.sample_with(&mut rng, n)
    }

    /// Draws `n` samples from an existing generator stream.
    pub fn sample_with(
        &self,
        rng: &mut ChaCha8Rng,
        n: usize,
    ) -> Result<Array2<f64>, GaussianError> {
        let d = self.dim();
        let mut out = Array2::<f64>::zeros((n, d));
        let mut u = vec![0.0; d];
        for mut row in out.rows_mut() {
            fill_standard_normal(rng, &mut u);
            let z = self.transform_standard(&ArrayView1::from(&u[..]))?;
            row.assign(&z);
        }
        Ok(out)
    }

    /// Log-density at `z`.
    pub fn log_density(&self, z: &ArrayView1<f64>) -> Result<f64, GaussianError> {
        let d = self.dim();
        if z.len() != d {
            return Err(GaussianError::DimensionMismatch { expected: d, actual: z.len() });
        }
        let ln_tau = std::f64::consts::TAU.ln();
        match &self.covariance {
            Covariance::Full(s) => {
                let l = s.factor()?;
                let diff = Array1::from_iter(z.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
                let v = forward_substitute(l, &diff.view());
                let quad = v.iter().map(|x| x * x).sum::<f64>();
                let half_log_det: f64 = (0..d).map(|i| l[[i, i]].ln()).sum();
                Ok(-0.5 * quad - 0.5 * d as f64 * ln_tau - half_log_det)
            }
            Covariance::Diagonal(vars) => {
                let mut acc = 0.0;
                for i in 0..d {
                    let diff = z[i] - self.mean[i];
                    acc += -0.5 * (diff * diff / vars[i] + ln_tau + vars[i].ln());
                }
                Ok(acc)
            }
            Covariance::ScaledIdentity(var) => {
                let mut quad = 0.0;
                for i in 0..d {
                    let diff = z[i] - self.mean[i];
                    quad += diff * diff;
                }
                Ok(-0.5 * (quad / var + d as f64 * (ln_tau + var.ln())))
            }
        }
    }

    /// Conditional law of the subset coordinates given observed values for
    /// the complement coordinates.
    ///
    /// With blocks `S11 = S[subset, subset]`, `S12 = S[subset, complement]`,
    /// `S22 = S[complement, complement]`, the result is
    /// `N(x1 + S12 S22^-1 (observed - x2), S11 - S12 S22^-1 S21)`, computed
    /// with triangular solves against the factor of `S22`. Requires a full
    /// covariance.
    pub fn condition(
        &self,
        p: &Partition,
        observed: &ArrayView1<f64>,
    ) -> Result<GaussianMeasure, GaussianError> {
        let s = match &self.covariance {
            Covariance::Full(s) => s,
            _ => return Err(GaussianError::RequiresFullCovariance),
        };
        if p.dim() != self.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                actual: p.dim(),
            });
        }
        if observed.len() != p.complement().len() {
            return Err(GaussianError::DimensionMismatch {
                expected: p.complement().len(),
                actual: observed.len(),
            });
        }
        let sub = p.subset();
        let com = p.complement();
        let x1 = gather(&self.mean.view(), sub);
        let x2 = gather(&self.mean.view(), com);
        let s11 = gather2(s.entries(), sub, sub);
        let s21 = gather2(s.entries(), com, sub);
        let s22 = SpdMatrix::new(gather2(s.entries(), com, com))?;
        let l22 = s22.factor()?;

        // W = L22^-1 * S21, column by column; then S12 S22^-1 S21 = W^T W.
        let mut w = Array2::<f64>::zeros((com.len(), sub.len()));
        for (c, mut col) in w.columns_mut().into_iter().enumerate() {
            let rhs = s21.column(c).to_owned();
            col.assign(&forward_substitute(l22, &rhs.view()));
        }
        let schur = &s11 - &w.t().dot(&w);

        let mut shift = observed.to_owned();
        shift -= &x2;
        let v = forward_substitute(l22, &shift.view());
        let mean = &x1 + &w.t().dot(&v);

        GaussianMeasure::full(mean, SpdMatrix::new(schur)?)
    }

    /// Marginal law of the complement coordinates of the partition.
    pub fn marginal(&self, p: &Partition) -> Result<GaussianMeasure, GaussianError> {
        if p.dim() != self.dim() {
            return Err(GaussianError::DimensionMismatch {
                expected: self.dim(),
                actual: p.dim(),
            });
        }
        self.marginal_of(p.complement())
    }

    /// Marginal law of an arbitrary list of distinct coordinates; with all
    /// coordinates listed in order this returns the original measure.
    pub fn marginal_of(&self, indices: &[usize]) -> Result<GaussianMeasure, GaussianError> {
        if indices.is_empty() {
            return Err(GaussianError::InvalidPartition("empty index list".into()));
        }
        let mut seen = vec![false; self.dim()];
        for &i in indices {
            if i >= self.dim() {
                return Err(GaussianError::InvalidPartition(format!(
                    "index {i} out of range for dimension {}",
                    self.dim()
                )));
            }
            if seen[i] {
                return Err(GaussianError::InvalidPartition(format!("index {i} repeated")));
            }
            seen[i] = true;
        }
        let mean = gather(&self.mean.view(), indices);
        let covariance = match &self.covariance {
            Covariance::Full(s) => {
                Covariance::Full(SpdMatrix::new(gather2(s.entries(), indices, indices))?)
            }
            Covariance::Diagonal(v) => Covariance::Diagonal(gather(&v.view(), indices)),
            Covariance::ScaledIdentity(var) => Covariance::ScaledIdentity(*var),
        };
        GaussianMeasure::new(mean, covariance)
    }
}

/// Gathers `v[indices]` into a new vector.
pub fn gather(v: &ArrayView1<f64>, indices: &[usize]) -> Array1<f64> {
    Array1::from_iter(indices.iter().map(|&i| v[i]))
}

/// Gathers the submatrix `m[rows, cols]`.
pub fn gather2(m: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| m[[rows[i], cols[j]]])
}

/// Writes `values` into a copy of `base` at the listed indices.
pub fn scatter(base: &Array1<f64>, indices: &[usize], values: &ArrayView1<f64>) -> Array1<f64> {
    let mut out = base.clone();
    for (&i, &v) in indices.iter().zip(values.iter()) {
        out[i] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn spd(entries: Array2<f64>) -> SpdMatrix {
        SpdMatrix::new(entries).expect("valid SPD input")
    }

    #[test]
    fn factor_of_identity_is_identity() {
        let s = SpdMatrix::identity(3);
        let l = s.factor().expect("identity factors");
        assert_eq!(l, &Array2::<f64>::eye(3));
    }

    #[test]
    fn factor_matches_hand_computed_2x2() {
        let s = spd(array![[4.0, 2.0], [2.0, 3.0]]);
        let l = s.factor().expect("SPD input factors");
        assert_abs_diff_eq!(l[[0, 0]], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[[1, 1]], 2.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[[0, 1]], 0.0, "factor must be lower triangular");
    }

    #[test]
    fn factor_rejects_indefinite_matrix() {
        let s = spd(array![[1.0, 2.0], [2.0, 1.0]]);
        assert_eq!(s.factor().unwrap_err(), GaussianError::NotPositiveDefinite { pivot: 1 });
        // The failure is cached, not recomputed into a different answer.
        assert_eq!(s.factor().unwrap_err(), GaussianError::NotPositiveDefinite { pivot: 1 });
    }

    #[test]
    fn factor_reconstructs_input() {
        let s = spd(array![[4.0, 2.0, 0.5], [2.0, 3.0, 0.25], [0.5, 0.25, 1.5]]);
        let l = s.factor().expect("factors");
        let rebuilt = l.dot(&l.t());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(rebuilt[[i, j]], s.entries()[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn construction_rejects_asymmetry_and_non_finite() {
        assert_eq!(
            SpdMatrix::new(array![[1.0, 0.5], [0.2, 1.0]]).unwrap_err(),
            GaussianError::NotSymmetric
        );
        assert_eq!(
            SpdMatrix::new(array![[f64::NAN, 0.0], [0.0, 1.0]]).unwrap_err(),
            GaussianError::NotFinite
        );
        assert!(matches!(
            SpdMatrix::new(Array2::zeros((2, 3))).unwrap_err(),
            GaussianError::NotSquare { .. }
        ));
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 2], vec![1]).is_ok());
        assert!(Partition::new(vec![], vec![0]).is_err());
        assert!(Partition::new(vec![0], vec![]).is_err());
        assert!(Partition::new(vec![0, 1], vec![1]).is_err(), "overlap");
        assert!(Partition::new(vec![0, 3], vec![1]).is_err(), "gap");
        let p = Partition::complementary(4, vec![1, 3]).unwrap();
        assert_eq!(p.complement(), &[0, 2]);
    }

    #[test]
    fn sample_is_deterministic_per_seed() {
        let g = GaussianMeasure::full(
            array![1.0, -2.0],
            spd(array![[4.0, 2.0], [2.0, 3.0]]),
        )
        .unwrap();
        let a = g.sample(16, 9).unwrap();
        let b = g.sample(16, 9).unwrap();
        assert_eq!(a, b, "same seed must give bit-identical draws");
        let c = g.sample(16, 10).unwrap();
        assert_ne!(a, c, "different seeds should differ");
    }

    #[test]
    fn sample_mean_approaches_mean() {
        let g = GaussianMeasure::standard(array![0.0, 0.0, 0.0]).unwrap();
        let n = 100_000;
        let draws = g.sample(n, 123).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        for j in 0..3 {
            let m = draws.column(j).sum() / n as f64;
            assert!(m.abs() < bound, "coordinate {j} mean {m} exceeds {bound}");
        }
    }

    #[test]
    fn sample_covariance_approaches_covariance() {
        let cov = array![[4.0, 2.0], [2.0, 3.0]];
        let g = GaussianMeasure::full(array![0.0, 0.0], spd(cov.clone())).unwrap();
        let n = 100_000;
        let draws = g.sample(n, 7).unwrap();
        let mean0 = draws.column(0).sum() / n as f64;
        let mean1 = draws.column(1).sum() / n as f64;
        let mut s = [[0.0f64; 2]; 2];
        for r in 0..n {
            let d0 = draws[[r, 0]] - mean0;
            let d1 = draws[[r, 1]] - mean1;
            s[0][0] += d0 * d0;
            s[0][1] += d0 * d1;
            s[1][1] += d1 * d1;
        }
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let est = s[i][j] / (n - 1) as f64;
            let rel = (est - cov[[i, j]]).abs() / cov[[i, j]].abs();
            assert!(rel < 0.05, "entry ({i},{j}) off by {rel:.3} relative");
        }
    }

    #[test]
    fn log_density_standard_normal_at_origin() {
        let g = GaussianMeasure::standard(array![0.0]).unwrap();
        let expected = -0.5 * std::f64::consts::TAU.ln();
        assert_abs_diff_eq!(g.log_density(&array![0.0].view()).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn log_density_matches_explicit_2x2_inverse() {
        // Direct evaluation through the inverse of [[4, 2], [2, 3]].
        let g = GaussianMeasure::full(
            array![0.0, 0.0],
            spd(array![[4.0, 2.0], [2.0, 3.0]]),
        )
        .unwrap();
        let z = array![1.0, -1.0];
        let det: f64 = 8.0;
        let inv = array![[3.0 / det, -2.0 / det], [-2.0 / det, 4.0 / det]];
        let quad = z.dot(&inv.dot(&z));
        let expected = -0.5 * quad - 0.5 * (2.0 * std::f64::consts::TAU.ln() + det.ln());
        assert_abs_diff_eq!(g.log_density(&z.view()).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn log_density_agrees_across_covariance_kinds() {
        let z = array![0.3, -1.2];
        let full = GaussianMeasure::full(
            array![0.1, 0.2],
            spd(array![[2.0, 0.0], [0.0, 0.5]]),
        )
        .unwrap();
        let diag =
            GaussianMeasure::diagonal(array![0.1, 0.2], array![2.0, 0.5]).unwrap();
        assert_abs_diff_eq!(
            full.log_density(&z.view()).unwrap(),
            diag.log_density(&z.view()).unwrap(),
            epsilon = 1e-12
        );

        let full_iso = GaussianMeasure::full(
            array![0.1, 0.2],
            spd(array![[0.7, 0.0], [0.0, 0.7]]),
        )
        .unwrap();
        let iso = GaussianMeasure::isotropic(array![0.1, 0.2], 0.7).unwrap();
        assert_abs_diff_eq!(
            full_iso.log_density(&z.view()).unwrap(),
            iso.log_density(&z.view()).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn condition_bivariate_known_answer() {
        let g = GaussianMeasure::full(
            array![0.0, 0.0],
            spd(array![[1.0, 0.5], [0.5, 1.0]]),
        )
        .unwrap();
        let p = Partition::complementary(2, vec![0]).unwrap();
        let cond = g.condition(&p, &array![1.0].view()).unwrap();
        assert_abs_diff_eq!(cond.mean()[0], 0.5, epsilon = 1e-14);
        match cond.covariance() {
            Covariance::Full(s) => {
                assert_abs_diff_eq!(s.entries()[[0, 0]], 0.75, epsilon = 1e-14)
            }
            other => panic!("expected full covariance, got {other:?}"),
        }
    }

    #[test]
    fn condition_with_block_diagonal_covariance_is_exact_no_op() {
        let g = GaussianMeasure::full(
            array![1.0, -2.0, 0.5],
            spd(array![[2.0, 0.3, 0.0], [0.3, 1.5, 0.0], [0.0, 0.0, 0.8]]),
        )
        .unwrap();
        let p = Partition::complementary(3, vec![0, 1]).unwrap();
        let cond = g.condition(&p, &array![9.0].view()).unwrap();
        // Independent blocks: observing the last coordinate changes nothing,
        // bit for bit.
        assert_eq!(cond.mean(), &array![1.0, -2.0]);
        match cond.covariance() {
            Covariance::Full(s) => {
                assert_eq!(s.entries(), &array![[2.0, 0.3], [0.3, 1.5]]);
            }
            other => panic!("expected full covariance, got {other:?}"),
        }
    }

    #[test]
    fn condition_requires_full_covariance() {
        let g = GaussianMeasure::standard(array![0.0, 0.0]).unwrap();
        let p = Partition::complementary(2, vec![0]).unwrap();
        assert_eq!(
            g.condition(&p, &array![0.0].view()).unwrap_err(),
            GaussianError::RequiresFullCovariance
        );
    }

    #[test]
    fn marginal_of_identity_covariance_is_standard() {
        let g = GaussianMeasure::full(array![1.0, 2.0, 3.0], SpdMatrix::identity(3)).unwrap();
        let p = Partition::complementary(3, vec![0]).unwrap();
        let m = g.marginal(&p).unwrap();
        assert_eq!(m.mean(), &array![2.0, 3.0]);
        match m.covariance() {
            Covariance::Full(s) => assert_eq!(s.entries(), &Array2::<f64>::eye(2)),
            other => panic!("expected full covariance, got {other:?}"),
        }
    }

    #[test]
    fn marginal_of_all_indices_returns_original() {
        let g = GaussianMeasure::full(
            array![1.0, -2.0],
            spd(array![[4.0, 2.0], [2.0, 3.0]]),
        )
        .unwrap();
        let m = g.marginal_of(&[0, 1]).unwrap();
        assert_eq!(m.mean(), g.mean());
        assert_eq!(m.covariance(), g.covariance());
    }

    #[test]
    fn chain_rule_density_identity_small() {
        let g = GaussianMeasure::full(
            array![0.5, -0.25, 1.0],
            spd(array![[2.0, 0.6, 0.3], [0.6, 1.0, 0.2], [0.3, 0.2, 1.5]]),
        )
        .unwrap();
        let p = Partition::complementary(3, vec![0, 2]).unwrap();
        let draws = g.sample(50, 77).unwrap();
        for row in draws.rows() {
            let z1 = gather(&row, p.subset());
            let z2 = gather(&row, p.complement());
            let joint = g.log_density(&row).unwrap();
            let marg = g.marginal(&p).unwrap().log_density(&z2.view()).unwrap();
            let cond = g
                .condition(&p, &z2.view())
                .unwrap()
                .log_density(&z1.view())
                .unwrap();
            assert_abs_diff_eq!(joint, marg + cond, epsilon = 1e-8);
        }
    }

    #[test]
    fn transform_standard_with_identity_covariance_is_exact_shift() {
        let full = GaussianMeasure::full(array![1.0, 2.0], SpdMatrix::identity(2)).unwrap();
        let iso = GaussianMeasure::standard(array![1.0, 2.0]).unwrap();
        let u = array![0.37, -1.11];
        let a = full.transform_standard(&u.view()).unwrap();
        let b = iso.transform_standard(&u.view()).unwrap();
        assert_eq!(a, b, "identity factor and unit scale must agree bitwise");
    }
}
