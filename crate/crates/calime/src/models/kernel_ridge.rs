//! Kernel ridge regression with an RBF kernel.
//!
//! Inputs are z-scored with their training statistics, the bandwidth is the
//! median pairwise distance of the scaled inputs, and the ridge penalty is
//! picked from a small grid by interleaved k-fold cross-validation.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::kernel::{median_pairwise_distance, rbf_cross, rbf_gram};

pub const MIN_REGRESSION_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorParams {
    pub ridge_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for RegressorParams {
    fn default() -> Self {
        Self {
            ridge_grid: vec![1e-3, 1e-2, 1e-1],
            folds: 3,
        }
    }
}

/// A fitted regressor from a parent sub-vector to one value, with its
/// training residuals `y - ŷ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelRidge {
    mean: Vec<f64>,
    scale: Vec<f64>,
    train: Matrix,
    dual: DVector<f64>,
    intercept: f64,
    bandwidth: f64,
    ridge: f64,
    residuals: Vec<f64>,
}

fn solve_dual(k: &Matrix, y: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let n = k.nrows();
    let mut jitter = ridge;
    loop {
        let a = k + Matrix::identity(n, n) * jitter;
        if let Some(ch) = Cholesky::<f64, Dyn>::new(a) {
            return ch.solve(y);
        }
        jitter *= 10.0;
    }
}

fn scale_inputs(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.iter_mut().for_each(|v| *v = (*v - mean[j]) / scale[j]);
    }
    out
}

/// Fit `y ~ f(x_parents)`. Requires at least five rows.
pub fn fit_regressor(
    x: &Matrix,
    y: &DVector<f64>,
    params: &RegressorParams,
) -> Result<KernelRidge> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n < MIN_REGRESSION_ROWS {
        return Err(Error::TooFewSamples {
            needed: MIN_REGRESSION_ROWS,
            got: n,
        });
    }
    if params.ridge_grid.is_empty() || params.ridge_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidInput(
            "ridge grid must hold positive values".into(),
        ));
    }
    let stats = ColumnStats::from_matrix(x)?;
    let scale: Vec<f64> = (0..x.ncols()).map(|j| stats.scale(j)).collect();
    let xs = scale_inputs(x, &stats.mean, &scale);
    let bandwidth = median_pairwise_distance(&xs);
    let gram = rbf_gram(&xs, bandwidth);

    let ridge = if params.ridge_grid.len() == 1 || params.folds < 2 || n < 2 * params.folds {
        params.ridge_grid[0]
    } else {
        select_ridge(&gram, y, params)
    };

    let intercept = y.mean();
    let yc = y.add_scalar(-intercept);
    let dual = solve_dual(&gram, &yc, ridge);
    let fitted = &gram * &dual;
    let residuals = (0..n).map(|i| yc[i] - fitted[i]).collect();
    Ok(KernelRidge {
        mean: stats.mean,
        scale,
        train: xs,
        dual,
        intercept,
        bandwidth,
        ridge,
        residuals,
    })
}

fn select_ridge(gram: &Matrix, y: &DVector<f64>, params: &RegressorParams) -> f64 {
    let n = gram.nrows();
    let mut best = (f64::INFINITY, params.ridge_grid[0]);
    for &ridge in &params.ridge_grid {
        let mut sse = 0.0;
        for fold in 0..params.folds {
            let train: Vec<usize> = (0..n).filter(|i| i % params.folds != fold).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % params.folds == fold).collect();
            let k_tt = gram.select_rows(&train).select_columns(&train);
            let y_t = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let mu = y_t.mean();
            let dual = solve_dual(&k_tt, &y_t.add_scalar(-mu), ridge);
            let k_vt = gram.select_rows(&test).select_columns(&train);
            let pred = k_vt * dual;
            sse += test
                .iter()
                .enumerate()
                .map(|(r, &i)| (y[i] - mu - pred[r]).powi(2))
                .sum::<f64>();
        }
        if sse < best.0 {
            best = (sse, ridge);
        }
    }
    best.1
}

impl KernelRidge {
    pub fn arity(&self) -> usize {
        self.mean.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, x: &Matrix) -> DVector<f64> {
        let xs = scale_inputs(x, &self.mean, &self.scale);
        let k = rbf_cross(&xs, &self.train, self.bandwidth);
        (k * &self.dual).add_scalar(self.intercept)
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let g = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let xs: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.scale[j])
            .collect();
        let mut acc = self.intercept;
        for (i, row) in self.train.row_iter().enumerate() {
            let d: f64 = row.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += self.dual[i] * (-g * d).exp();
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    /// Direct solve of the same model for a fixed ridge, without CV.
    fn closed_form(x: &[f64], y: &[f64], ridge: f64) -> Vec<f64> {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let xs: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
        let mut d: Vec<f64> = vec![];
        for i in 0..n {
            for j in i + 1..n {
                d.push((xs[i] - xs[j]).abs());
            }
        }
        d.sort_by(f64::total_cmp);
        let h = d[d.len() / 2];
        let k = Matrix::from_fn(n, n, |i, j| {
            (-(xs[i] - xs[j]).powi(2) / (2.0 * h * h)).exp()
        });
        let ym = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        let a = (&k + Matrix::identity(n, n) * ridge)
            .lu()
            .solve(&yc)
            .unwrap();
        (&k * a).iter().map(|v| v + ym).collect()
    }

    #[test]
    fn linear_target_is_fit_almost_exactly() {
        let x: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let params = RegressorParams {
            ridge_grid: vec![1e-5],
            folds: 3,
        };
        let r = fit_regressor(&column(&x), &DVector::from_vec(y.clone()), &params).unwrap();
        let sd = {
            let m = y.iter().sum::<f64>() / 50.0;
            (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 49.0).sqrt()
        };
        let max_res = r.residuals().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_res < 0.01 * sd, "max residual {max_res} vs sd {sd}");
        // agrees with an independent dense solve
        let oracle = closed_form(&x, &y, 1e-5);
        for (i, o) in oracle.iter().enumerate() {
            assert!((r.predict_one(&[x[i]]) - o).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = DVector::from_element(6, 4.2);
        let r = fit_regressor(&x, &y, &RegressorParams::default()).unwrap();
        for v in [-10.0, 0.5, 3.3, 100.0] {
            assert!((r.predict_one(&[v]) - 4.2).abs() < 1e-6);
        }
    }

    #[test]
    fn noisy_sine_has_small_residuals() {
        let mut rng = crate::rng::rng_from_seed(5);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() + noise.sample(&mut rng)).collect();
        let r = fit_regressor(
            &column(&x),
            &DVector::from_vec(y.clone()),
            &RegressorParams::default(),
        )
        .unwrap();
        let rmse = (r.residuals().iter().map(|e| e * e).sum::<f64>() / 200.0).sqrt();
        assert!(rmse < 0.1, "rmse {rmse}");
        let oracle = closed_form(&x, &y, r.ridge());
        let pred = r.predict(&column(&x));
        for i in 0..200 {
            assert!((pred[i] - oracle[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = column(&[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_regressor(&x, &y, &RegressorParams::default()),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn batch_and_single_prediction_agree() {
        let x = Matrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y = DVector::from_fn(30, |i, _| (i % 5) as f64);
        let r = fit_regressor(&x, &y, &RegressorParams::default()).unwrap();
        let p = r.predict(&x);
        for i in 0..30 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!((p[i] - r.predict_one(&row)).abs() < 1e-10);
        }
        assert_eq!(r.residuals().len(), 30);
        assert_eq!(r.arity(), 2);
    }
}
