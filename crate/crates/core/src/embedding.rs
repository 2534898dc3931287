use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major `n_samples x dim` low-dimensional coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCoords {
    n_samples: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl EmbeddingCoords {
    pub fn new(n_samples: usize, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if coords.len() != n_samples * dim {
            return Err(Error::DimensionMismatch {
                expected: n_samples * dim,
                actual: coords.len(),
            });
        }
        if let Some(p) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: p / dim,
                col: p % dim,
            });
        }
        Ok(Self {
            n_samples,
            dim,
            coords,
        })
    }

    pub fn zeros(n_samples: usize, dim: usize) -> Self {
        Self {
            n_samples,
            dim,
            coords: vec![0.0; n_samples * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("rows", "ragged coordinate rows"));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingCoords {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.row(i));
        }
        EmbeddingCoords {
            n_samples: indices.len(),
            dim: self.dim,
            coords,
        }
    }

    #[inline]
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}
