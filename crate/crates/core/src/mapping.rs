//! Orthogonal Procrustes fitting and smoothed transformation updates.

use ndarray::{Array2, ArrayView2};

use crate::correspondence::PseudoPairSet;
use crate::error::AlignError;
use crate::linalg::svd;

/// Smallest singular value of `A^T B` below which the fit is flagged as
/// rank-deficient. The solution is still returned.
pub const RANK_DEFICIENCY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesSolution {
    /// Orthogonal `d x d` map, applied as `a W`.
    pub w: Array2<f64>,
    /// Root-mean-square of `|a_i W - b_i|` over the pairs.
    pub residual: f64,
    pub min_singular_value: f64,
    pub rank_deficient: bool,
}

/// Orthogonal `W` minimizing `|A W - B|_F`, where the rows of `A` and `B` are
/// the paired source and target vectors.
///
/// With `A^T B = U S V^T`, the minimizer under the row-vector convention is
/// `W = U V^T`. Reflections are allowed. Pairs are unweighted.
pub fn procrustes(pairs: &PseudoPairSet) -> Result<ProcrustesSolution, AlignError> {
    procrustes_views(pairs.source.view(), pairs.target.view())
}

pub fn procrustes_views(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<ProcrustesSolution, AlignError> {
    if a.dim() != b.dim() {
        return Err(AlignError::ShapeMismatch(format!("pair matrices are {:?} and {:?}", a.dim(), b.dim())));
    }
    let (m, d) = a.dim();
    if m == 0 {
        return Err(AlignError::TooFewPairs(m));
    }
    if m < d {
        log::debug!("procrustes on {m} pairs in dimension {d}; the fit is underdetermined");
    }
    let cross = a.t().dot(&b);
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::NonFiniteInput("procrustes pairs"));
    }
    let decomp = svd(cross.view());
    let w = decomp.u.dot(&decomp.v.t());
    let min_sv = decomp.sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_deficient = min_sv < RANK_DEFICIENCY_THRESHOLD;
    if rank_deficient {
        log::warn!("procrustes cross-covariance is rank-deficient (min singular value {min_sv:.3e}); the fit is not unique");
    }
    let residual = rms_residual(a, b, w.view());
    Ok(ProcrustesSolution { w, residual, min_singular_value: min_sv, rank_deficient })
}

pub fn rms_residual(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> f64 {
    let diff = a.dot(&w) - b;
    (diff.iter().map(|v| v * v).sum::<f64>() / a.nrows() as f64).sqrt()
}

/// `(1 - alpha) W + alpha W_new`.
pub fn smooth_update(w: ArrayView2<'_, f64>, w_new: ArrayView2<'_, f64>, alpha: f64) -> Result<Array2<f64>, AlignError> {
    if w.dim() != w_new.dim() {
        return Err(AlignError::ShapeMismatch(format!("{:?} vs {:?}", w.dim(), w_new.dim())));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AlignError::InvalidConfig { field: "alpha", reason: format!("{alpha} is outside (0, 1]") });
    }
    if alpha == 1.0 {
        return Ok(w_new.to_owned());
    }
    Ok(&w * (1.0 - alpha) + &w_new * alpha)
}
