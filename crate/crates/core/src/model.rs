//! The fitted alignment and its application to new embeddings.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::embedding::EmbeddingMatrix;
use crate::error::AlignError;
use crate::preprocess::{normalize_with_mean, NormalizationStats};

/// Mean cosine similarity recorded after each pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub initial: Option<f64>,
    pub refine1: Option<f64>,
    pub refine2: Option<f64>,
    /// Per-iteration mean cosine from Refine-1.
    pub refine1_trace: Vec<f64>,
}

/// A learned `d x d` map from the normalized source space into the
/// normalized target space, together with the preprocessing statistics of
/// both pools. Rows are mapped as `x W` (row-vector convention).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentModel {
    pub w: Array2<f64>,
    pub stats_a: NormalizationStats,
    pub stats_b: NormalizationStats,
    pub diagnostics: StageDiagnostics,
    pub config: PipelineConfig,
}

impl AlignmentModel {
    pub fn new(
        w: Array2<f64>,
        stats_a: NormalizationStats,
        stats_b: NormalizationStats,
        diagnostics: StageDiagnostics,
        config: PipelineConfig,
    ) -> Result<Self, AlignError> {
        let d = w.nrows();
        if w.ncols() != d {
            return Err(AlignError::ShapeMismatch(format!("W is {}x{}, expected square", d, w.ncols())));
        }
        for found in [stats_a.d(), stats_b.d()] {
            if found != d {
                return Err(AlignError::DimensionMismatch { expected: d, found });
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(AlignError::NonFiniteInput("transformation matrix"));
        }
        Ok(Self { w, stats_a, stats_b, diagnostics, config })
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    /// Applies `W` to rows that are already centered and normalized.
    /// Linear in its input.
    pub fn map_normalized(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, AlignError> {
        if x.ncols() != self.d() {
            return Err(AlignError::DimensionMismatch { expected: self.d(), found: x.ncols() });
        }
        Ok(x.dot(&self.w))
    }

    /// Maps raw source embeddings into the normalized target space: centers
    /// with the training source mean, normalizes rows, then applies `W`.
    /// Output rows are not re-normalized.
    pub fn translate(&self, x_raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix, AlignError> {
        if x_raw.d() != self.d() {
            return Err(AlignError::DimensionMismatch { expected: self.d(), found: x_raw.d() });
        }
        let xh = normalize_with_mean(x_raw, self.stats_a.mean.view())?;
        let mapped = self.map_normalized(xh.view())?;
        EmbeddingMatrix::new(mapped, format!("{} (translated)", x_raw.label()))
    }

    /// Centers and normalizes raw target embeddings with the training target mean.
    pub fn normalize_target(&self, x_raw: &EmbeddingMatrix) -> Result<EmbeddingMatrix, AlignError> {
        normalize_with_mean(x_raw, self.stats_b.mean.view())
    }
}
