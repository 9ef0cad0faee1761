//! Weighted Lasso by coordinate descent and the K-Lasso feature budget.
//!
//! The penalised objective, with normalised weights `w̃ = w / Σw`, is
//!
//! ```text
//! ½ Σ_i w̃_i (y_i - b - z_i·β)² + λ ‖β‖₁
//! ```
//!
//! with an unpenalised intercept `b`. K-Lasso walks a geometric λ grid from
//! `λ_max` down to `1e-4·λ_max`, stops before the active set grows past `k`,
//! and refits the selected columns by unpenalised weighted least squares.

use nalgebra::{DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub const PATH_LENGTH: usize = 100;
pub const PATH_RATIO: f64 = 1e-4;
const CD_TOL: f64 = 1e-13;
const CD_MAX_SWEEPS: usize = 200_000;

/// Result of a K-Lasso fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    /// Refit coefficients; zero outside `active`.
    pub coef: DVector<f64>,
    pub intercept: f64,
    /// Selected columns in ascending order, at most `k` of them.
    pub active: Vec<usize>,
    /// Penalty of the path point the active set was read from.
    pub lambda: f64,
    /// Penalised solution at `lambda`, before the refit.
    pub lasso_coef: DVector<f64>,
    pub lasso_intercept: f64,
    /// Per-column penalty weights: the weighted standard deviations the
    /// path was standardized with (0 for constant columns).
    pub penalty_factors: DVector<f64>,
}

impl LassoFit {
    pub fn predict(&self, z: &Matrix) -> DVector<f64> {
        (z * &self.coef).add_scalar(self.intercept)
    }

    /// [`kkt_violation`] of the penalised solution, checked on the
    /// standardized columns the path was solved on.
    pub fn kkt_violation(&self, z: &Matrix, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let f = &self.penalty_factors;
        let zs = Matrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            if f[j] > 0.0 {
                z[(i, j)] / f[j]
            } else {
                0.0
            }
        });
        kkt_violation(
            &zs,
            y,
            w,
            &self.lasso_coef.component_mul(f),
            self.lasso_intercept,
            self.lambda,
        )
    }
}

/// Weighted, centred sufficient statistics of a regression problem.
struct Moments {
    z_mean: DVector<f64>,
    y_mean: f64,
    gram: Matrix,
    corr: DVector<f64>,
}

fn normalised_weights(n: usize, y: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if y.len() != n { y.len() } else { w.len() },
        });
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = w.sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    Ok(w / total)
}

fn moments(z: &Matrix, y: &DVector<f64>, w: &DVector<f64>) -> Moments {
    let m = z.ncols();
    let z_mean = z.tr_mul(w);
    let y_mean = w.dot(y);
    let mut zc = z.clone();
    for j in 0..m {
        let mu = z_mean[j];
        zc.column_mut(j).iter_mut().for_each(|v| *v -= mu);
    }
    let yc = y.add_scalar(-y_mean);
    let mut zw = zc.clone();
    for (i, mut row) in zw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let gram = zc.tr_mul(&zw);
    let corr = zw.tr_mul(&yc);
    Moments {
        z_mean,
        y_mean,
        gram,
        corr,
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent on the covariance form, warm-started from `beta`.
fn descend(mo: &Moments, lambda: f64, beta: &mut DVector<f64>) {
    let m = beta.len();
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..m {
            let gjj = mo.gram[(j, j)];
            if gjj <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let partial = mo.corr[j] - mo.gram.column(j).dot(beta) + gjj * beta[j];
            let new = soft_threshold(partial, lambda) / gjj;
            max_delta = max_delta.max(((new - beta[j]) * gjj.sqrt()).abs());
            beta[j] = new;
        }
        if max_delta < CD_TOL {
            break;
        }
    }
}

/// Penalised weighted Lasso at a single λ. Returns `(coefficients, intercept)`.
pub fn weighted_lasso(
    z: &Matrix,
    y: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
) -> Result<(DVector<f64>, f64)> {
    let wn = normalised_weights(z.nrows(), y, w)?;
    let mo = moments(z, y, &wn);
    let mut beta = DVector::zeros(z.ncols());
    descend(&mo, lambda, &mut beta);
    let b = mo.y_mean - mo.z_mean.dot(&beta);
    Ok((beta, b))
}

/// Smallest λ whose solution is identically zero.
pub fn lambda_max(z: &Matrix, y: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    let wn = normalised_weights(z.nrows(), y, w)?;
    Ok(moments(z, y, &wn).corr.amax())
}

/// Objective value of `(beta, intercept)` at `lambda`.
pub fn objective(
    z: &Matrix,
    y: &DVector<f64>,
    w: &DVector<f64>,
    beta: &DVector<f64>,
    intercept: f64,
    lambda: f64,
) -> f64 {
    let total = w.sum();
    let r = y - (z * beta).add_scalar(intercept);
    0.5 * r
        .iter()
        .zip(w.iter())
        .map(|(e, wi)| wi / total * e * e)
        .sum::<f64>()
        + lambda * beta.lp_norm(1)
}

/// Largest violation of the Lasso stationarity conditions, computed from the
/// raw data: `|g_j| ≤ λ` for inactive columns and `g_j = λ·sign(β_j)` for
/// active ones, where `g_j` is the weighted correlation of column `j` with
/// the residual.
pub fn kkt_violation(
    z: &Matrix,
    y: &DVector<f64>,
    w: &DVector<f64>,
    beta: &DVector<f64>,
    intercept: f64,
    lambda: f64,
) -> f64 {
    let total = w.sum();
    let r = y - (z * beta).add_scalar(intercept);
    let wr = r.component_mul(w) / total;
    let mut worst = wr.sum().abs(); // intercept stationarity
    for j in 0..z.ncols() {
        let g = z.column(j).dot(&wr);
        let v = if beta[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Unpenalised weighted least squares on the given columns.
/// Returns the full-width coefficient vector and the intercept.
pub fn weighted_refit(
    z: &Matrix,
    y: &DVector<f64>,
    w: &DVector<f64>,
    columns: &[usize],
) -> Result<(DVector<f64>, f64)> {
    let wn = normalised_weights(z.nrows(), y, w)?;
    let mut coef = DVector::zeros(z.ncols());
    if columns.is_empty() {
        return Ok((coef, wn.dot(y)));
    }
    let sub = z.select_columns(columns);
    let mo = moments(&sub, y, &wn);
    // Pseudo-inverse handles collinear or constant selected columns.
    let svd = SVD::new(mo.gram.clone(), true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let beta = svd
        .solve(&mo.corr, tol)
        .map_err(|e| Error::Degenerate(format!("weighted refit failed: {e}")))?;
    for (pos, &j) in columns.iter().enumerate() {
        coef[j] = beta[pos];
    }
    let intercept = mo.y_mean - mo.z_mean.dot(&beta);
    Ok((coef, intercept))
}

fn active_set(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// K-Lasso: select at most `k` columns along the regularisation path, then
/// refit them without penalty. Deterministic.
pub fn fit_k_lasso(z: &Matrix, y: &DVector<f64>, w: &DVector<f64>, k: usize) -> Result<LassoFit> {
    let m = z.ncols();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("k = {k} outside [1, {m}]")));
    }
    let wn = normalised_weights(z.nrows(), y, w)?;
    let mo = moments(z, y, &wn);
    // The path runs on columns scaled to unit weighted variance so selection
    // does not depend on column units. Constant columns can never enter.
    let scale: DVector<f64> = mo
        .gram
        .diagonal()
        .map(|g| if g > 0.0 { g.sqrt() } else { 0.0 });
    let inv = scale.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 });
    let std_mo = Moments {
        z_mean: DVector::zeros(m),
        y_mean: mo.y_mean,
        gram: Matrix::from_fn(m, m, |i, j| mo.gram[(i, j)] * inv[i] * inv[j]),
        corr: mo.corr.component_mul(&inv),
    };
    let lmax = std_mo.corr.amax();
    // A constant target carries no signal; rounding in the weighted centring
    // must not let columns enter on noise.
    let constant_target = y.iter().all(|&v| v == y[0]);

    if lmax <= 0.0 || constant_target {
        let (coef, intercept) = weighted_refit(z, y, w, &[])?;
        return Ok(LassoFit {
            lasso_coef: coef.clone(),
            lasso_intercept: intercept,
            coef,
            intercept,
            active: Vec::new(),
            lambda: 0.0,
            penalty_factors: scale,
        });
    }

    let mut beta = DVector::zeros(m);
    let mut chosen = (lmax, beta.clone());
    let mut overflow: Option<DVector<f64>> = None;
    for t in 0..PATH_LENGTH {
        let lambda = lmax * PATH_RATIO.powf(t as f64 / (PATH_LENGTH - 1) as f64);
        descend(&std_mo, lambda, &mut beta);
        if active_set(&beta).len() > k {
            overflow = Some(beta.clone());
            break;
        }
        chosen = (lambda, beta.clone());
    }

    let (lambda, std_coef) = chosen;
    let mut active = active_set(&std_coef);
    // Several columns entered between two grid points: fill the remaining
    // budget with the newcomers of largest magnitude, which are the ones
    // that entered first. Ties go to the lower index.
    if let Some(next) = overflow {
        let mut newcomers: Vec<usize> = active_set(&next)
            .into_iter()
            .filter(|j| !active.contains(j))
            .collect();
        newcomers.sort_by(|&a, &b| next[b].abs().total_cmp(&next[a].abs()).then(a.cmp(&b)));
        active.extend(newcomers.into_iter().take(k - active.len()));
        active.sort_unstable();
    }
    let lasso_coef = std_coef.component_mul(&inv);
    let lasso_intercept = mo.y_mean - mo.z_mean.dot(&lasso_coef);
    let (coef, intercept) = weighted_refit(z, y, w, &active)?;
    Ok(LassoFit {
        coef,
        intercept,
        active,
        lambda,
        lasso_coef,
        lasso_intercept,
        penalty_factors: scale,
    })
}
