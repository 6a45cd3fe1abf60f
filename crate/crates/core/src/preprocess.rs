//! Centering and unit normalization of embedding pools.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::AlignError;
use crate::linalg::column_mean;

/// Rows whose centered norm falls below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Per-space statistics captured at preprocessing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Array1<f64>,
    /// `|mean| / average row norm` of the raw pool. Diagnostic only: a large
    /// share means centering removes most of each vector, so cosine values in
    /// the normalized space understate raw-space similarity.
    pub mean_norm_share: f64,
}

impl NormalizationStats {
    pub fn zero(d: usize) -> Self {
        Self { mean: Array1::zeros(d), mean_norm_share: 0.0 }
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }
}

/// Subtracts the column mean from every row, then scales each row to unit length.
pub fn center_and_normalize(
    x: &EmbeddingMatrix,
) -> Result<(EmbeddingMatrix, NormalizationStats), AlignError> {
    let mean = column_mean(x.view());
    let avg_norm = x.view().rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / x.n() as f64;
    let mean_norm = mean.dot(&mean).sqrt();
    let share = if avg_norm > 0.0 { (mean_norm / avg_norm).min(1.0) } else { 0.0 };
    let normalized = normalize_with_mean(x, mean.view())?;
    Ok((normalized, NormalizationStats { mean, mean_norm_share: share }))
}

/// Centers with a given mean (e.g. one stored in a fitted model) and normalizes.
pub fn normalize_with_mean(
    x: &EmbeddingMatrix,
    mean: ArrayView1<'_, f64>,
) -> Result<EmbeddingMatrix, AlignError> {
    if mean.len() != x.d() {
        return Err(AlignError::DimensionMismatch { expected: mean.len(), found: x.d() });
    }
    let mut out: Array2<f64> = x.data() - &mean;
    let mut degenerate = Vec::new();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < DEGENERATE_NORM {
            degenerate.push(i);
        } else {
            row.mapv_inplace(|v| v / norm);
        }
    }
    if !degenerate.is_empty() {
        return Err(AlignError::DegenerateRow { rows: degenerate });
    }
    EmbeddingMatrix::new(out, x.label())
}

/// Row indices that would be degenerate after centering with `mean`.
pub fn degenerate_rows(x: &EmbeddingMatrix, mean: ArrayView1<'_, f64>) -> Vec<usize> {
    x.view()
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| {
            let norm_sq: f64 = row.iter().zip(mean.iter()).map(|(a, m)| (a - m) * (a - m)).sum();
            norm_sq.sqrt() < DEGENERATE_NORM
        })
        .map(|(i, _)| i)
        .collect()
}

/// Removes rows that are degenerate under the pool's own mean, returning the
/// surviving pool and the dropped indices. Dropping rows shifts the mean, so
/// this repeats until the pool is clean.
pub fn drop_degenerate_rows(x: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, Vec<usize>), AlignError> {
    let mut keep: Vec<usize> = (0..x.n()).collect();
    let mut current = x.clone();
    loop {
        let mean = column_mean(current.view());
        let bad = degenerate_rows(&current, mean.view());
        if bad.is_empty() {
            let dropped = (0..x.n()).filter(|i| !keep.contains(i)).collect();
            return Ok((current, dropped));
        }
        if bad.len() == current.n() {
            return Err(AlignError::DegenerateRow { rows: (0..x.n()).collect() });
        }
        let survivors: Vec<usize> = (0..current.n()).filter(|i| !bad.contains(i)).collect();
        keep = survivors.iter().map(|&i| keep[i]).collect();
        current = current.select_rows(&survivors)?;
    }
}
