//! Effective rank of embedding matrices and the Eigenscore baseline.
//!
//! Entropies are in nats. `exp(H)` only reads as an "effective number of
//! directions" when the exponential matches the log base used for `H`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data_model::EmbeddingSet;
use crate::error::{Error, Result};

/// Regularizer for [`eigenscore`] used throughout the evaluation.
pub const DEFAULT_EIGENSCORE_ALPHA: f64 = 1e-3;

/// `n x m` matrix whose columns are embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    inner: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::domain("embedding matrix must have at least one row and column"));
        }
        if inner.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding matrix has a non-finite entry"));
        }
        Ok(Self { inner })
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != n) {
            return Err(Error::domain("columns have different lengths"));
        }
        let data: Vec<f64> = columns.iter().flat_map(|c| c.as_ref().iter().copied()).collect();
        Self::from_matrix(DMatrix::from_vec(n, columns.len(), data))
    }

    /// Row dimension.
    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    /// Column count.
    pub fn m(&self) -> usize {
        self.inner.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Lays the vectors of `set` out as columns, response-major then layer,
/// widening each component to `f64`.
pub fn build_matrix(set: &EmbeddingSet) -> EmbeddingMatrix {
    let data: Vec<f64> = set.data().iter().map(|&v| f64::from(v)).collect();
    EmbeddingMatrix { inner: DMatrix::from_vec(set.n(), set.m(), data) }
}

/// Singular values in non-increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empty singular spectrum"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("singular value {v} is negative or non-finite")));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::domain("singular values must be non-increasing"));
        }
        Ok(Self { values })
    }

    /// Sorts into descending order before validating.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Count of values above `rel_tol * sigma_1`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let cutoff = self.values[0] * rel_tol;
        self.values.iter().filter(|&&s| s > cutoff).count()
    }
}

/// All `min(n, m)` singular values of `a`, descending.
pub fn singular_spectrum(a: &EmbeddingMatrix) -> Result<SingularSpectrum> {
    if a.inner.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix has a non-finite entry"));
    }
    let svd = a
        .inner
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    SingularSpectrum::from_unsorted(svd.singular_values.iter().map(|s| s.max(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveRankResult {
    /// `sigma_i / sum(sigma)`.
    pub probabilities: Vec<f64>,
    pub entropy_nats: f64,
    /// `exp(entropy_nats)`, in `[1, len]`.
    pub effective_rank: f64,
}

/// Options for [`effective_rank_with`]. The default includes every singular
/// value, however small.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EffectiveRankOptions {
    /// Diagnostic only: drop values below `ratio * sigma_1` before normalizing.
    pub truncate_below: Option<f64>,
}

/// Shannon entropy (nats) of a probability vector, with `0 ln 0 = 0`.
pub fn shannon_entropy(probabilities: &[f64]) -> f64 {
    -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn effective_rank(spectrum: &SingularSpectrum) -> Result<EffectiveRankResult> {
    effective_rank_with(spectrum, EffectiveRankOptions::default())
}

pub fn effective_rank_with(
    spectrum: &SingularSpectrum,
    options: EffectiveRankOptions,
) -> Result<EffectiveRankResult> {
    let floor = options.truncate_below.map_or(0.0, |r| r * spectrum.values[0]);
    let kept: Vec<f64> = spectrum
        .values
        .iter()
        .map(|&s| if options.truncate_below.is_some() && s < floor { 0.0 } else { s })
        .collect();
    let total: f64 = kept.iter().sum();
    if total <= 0.0 {
        return Err(Error::domain("zero matrix has no defined effective rank"));
    }
    let probabilities: Vec<f64> = kept.iter().map(|s| s / total).collect();
    let entropy_nats = shannon_entropy(&probabilities);
    Ok(EffectiveRankResult { probabilities, entropy_nats, effective_rank: entropy_nats.exp() })
}

/// Shorthand for `effective_rank(singular_spectrum(a))`.
pub fn matrix_effective_rank(a: &EmbeddingMatrix) -> Result<f64> {
    Ok(effective_rank(&singular_spectrum(a)?)?.effective_rank)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenscoreResult {
    pub score: f64,
    pub alpha: f64,
    /// Eigenvalues of the centred Gram matrix, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
}

/// Mean log of the regularized eigenvalues of the column-centred Gram matrix.
/// Larger means more spread between the embeddings.
pub fn eigenscore(a: &EmbeddingMatrix, alpha: f64) -> Result<EigenscoreResult> {
    let m = a.m();
    if m < 2 {
        return Err(Error::domain(format!("eigenscore needs at least 2 columns, got {m}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    let mean = a.inner.column_mean();
    let mut centred = a.inner.clone();
    for mut col in centred.column_iter_mut() {
        col -= &mean;
    }
    let gram = centred.tr_mul(&centred);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    let score = eigenvalues.iter().map(|l| (l + alpha).ln()).sum::<f64>() / m as f64;
    Ok(EigenscoreResult { score, alpha, eigenvalues })
}

/// Mean effective rank over every run of `window` consecutive layer vectors.
pub fn layer_window_erank<V: AsRef<[f64]>>(layers: &[V], window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::domain(format!("window must be at least 2, got {window}")));
    }
    if layers.len() < window {
        return Err(Error::domain(format!(
            "{} layer vectors is fewer than the window of {window}",
            layers.len()
        )));
    }
    let mut total = 0.0;
    let windows = layers.windows(window);
    let count = windows.len();
    for w in windows {
        total += matrix_effective_rank(&EmbeddingMatrix::from_columns(w)?)?;
    }
    Ok(total / count as f64)
}
