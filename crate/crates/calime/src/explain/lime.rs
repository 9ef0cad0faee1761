use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::gencda::CHUNK_ROWS;
use crate::rng::child_rng;

/// Gaussian perturbations around `x`: `z_j = x_j + std_j · N(0, 1)`.
pub fn lime_neighborhood(x: &[f64], stats: &ColumnStats, n: usize, seed: u64) -> Result<Matrix> {
    let m = stats.n_features();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "neighborhood size must be at least 1".into(),
        ));
    }
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let mut rng = child_rng(seed, c as u64);
            let rows = CHUNK_ROWS.min(n - c * CHUNK_ROWS);
            let mut out = Vec::with_capacity(rows * m);
            for _ in 0..rows {
                for j in 0..m {
                    let noise: f64 = rng.sample(StandardNormal);
                    out.push(if stats.std[j] > 0.0 {
                        x[j] + stats.std[j] * noise
                    } else {
                        x[j]
                    });
                }
            }
            out
        })
        .collect();
    let flat: Vec<f64> = chunks.into_iter().flatten().collect();
    Ok(Matrix::from_row_slice(n, m, &flat))
}

/// `w_i = exp(-d(x, z_i)² / σ²)` with `d` the Euclidean distance after
/// scaling each coordinate by its column scale. Weights that would underflow
/// are floored at the smallest positive double.
pub fn kernel_weights(
    x: &[f64],
    z: &Matrix,
    stats: &ColumnStats,
    sigma: f64,
) -> Result<DVector<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "kernel width must be positive, got {sigma}"
        )));
    }
    if z.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.ncols(),
        });
    }
    let inv: Vec<f64> = (0..x.len()).map(|j| 1.0 / stats.scale(j)).collect();
    Ok(DVector::from_fn(z.nrows(), |i, _| {
        let d2: f64 = (0..x.len())
            .map(|j| ((z[(i, j)] - x[j]) * inv[j]).powi(2))
            .sum();
        (-d2 / (sigma * sigma)).exp().max(f64::MIN_POSITIVE)
    }))
}
