//! Dense embedding pools.

use ndarray::{Array2, ArrayView2};

use crate::error::AlignError;

/// An `n x d` pool of embeddings, one per row.
///
/// Construction checks `n >= 1`, `d >= 2` and that every entry is finite, so
/// downstream code can rely on those without re-validating.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
    label: String,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>, label: impl Into<String>) -> Result<Self, AlignError> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(AlignError::EmptyInput("embedding matrix has no rows"));
        }
        if d < 2 {
            return Err(AlignError::DimensionMismatch { expected: 2, found: d });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AlignError::NonFiniteInput("embedding matrix"));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            label: label.into(),
        })
    }

    /// Builds a matrix from row vectors. Convenient in tests and small tools.
    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self, AlignError> {
        let n = rows.len();
        if n == 0 {
            return Err(AlignError::EmptyInput("embedding matrix has no rows"));
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(AlignError::DimensionMismatch { expected: d, found: bad.len() });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| AlignError::ShapeMismatch(e.to_string()))?;
        Self::new(data, label)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Returns a copy keeping only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, AlignError> {
        let picked = self.data.select(ndarray::Axis(0), rows);
        Self::new(picked, self.label.clone())
    }
}
