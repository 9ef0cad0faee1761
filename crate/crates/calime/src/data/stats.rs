use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Per-column summary statistics. `std` uses the sample convention (ddof = 1);
/// a single-row column has std 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ColumnStats {
    pub fn from_matrix(x: &Matrix) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let m = x.ncols();
        let mut stats = ColumnStats {
            mean: Vec::with_capacity(m),
            std: Vec::with_capacity(m),
            min: Vec::with_capacity(m),
            max: Vec::with_capacity(m),
        };
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let std = if n > 1 {
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            stats.mean.push(mean);
            stats.std.push(std);
            stats
                .min
                .push(col.iter().copied().fold(f64::INFINITY, f64::min));
            stats
                .max
                .push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(stats)
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Divisor used for z-scoring; zero-variance columns scale by 1.
    pub fn scale(&self, j: usize) -> f64 {
        if self.std[j] > 0.0 {
            self.std[j]
        } else {
            1.0
        }
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] <= 0.0
    }

    pub fn standardize_row(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .enumerate()
                .map(|(j, v)| (v - self.mean[j]) / self.scale(j)),
        )
    }

    pub fn standardize(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (mu, s) = (self.mean[j], self.scale(j));
            col.iter_mut().for_each(|v| *v = (*v - mu) / s);
        }
        out
    }
}
