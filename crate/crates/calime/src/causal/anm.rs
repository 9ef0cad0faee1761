//! Additive-noise residual tests: regress, then test the residual against
//! the regressors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hsic::{hsic_test_multi, HsicResult};
use crate::data::Matrix;
use crate::error::Result;
use crate::models::{fit_regressor, RegressorParams};

/// Residuals whose spread is below this fraction of the target's spread are
/// treated as an exact functional fit and replaced by zeros.
pub const DETERMINISTIC_RATIO: f64 = 1e-2;

fn std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Training residuals of `y` regressed on the columns of `x`; an empty `x`
/// yields the centred target.
pub fn regression_residuals(x: &Matrix, y: &[f64], params: &RegressorParams) -> Result<Vec<f64>> {
    let sy = std(y);
    if sy == 0.0 {
        return Ok(vec![0.0; y.len()]);
    }
    if x.ncols() == 0 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(y.iter().map(|v| v - m).collect());
    }
    let fit = fit_regressor(x, &DVector::from_column_slice(y), params)?;
    let r = fit.residuals().to_vec();
    if std(&r) < DETERMINISTIC_RATIO * sy {
        return Ok(vec![0.0; y.len()]);
    }
    Ok(r)
}

/// Regress `y` on `x` and test the residual for independence of `x`.
pub fn residual_independence(
    x: &Matrix,
    y: &[f64],
    params: &RegressorParams,
) -> Result<HsicResult> {
    let r = regression_residuals(x, y, params)?;
    hsic_test_multi(x, &Matrix::from_column_slice(r.len(), 1, &r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnmScore {
    /// Test of `y - f(x)` against `x`.
    pub forward: HsicResult,
    /// Test of `x - g(y)` against `y`.
    pub backward: HsicResult,
}

impl AnmScore {
    /// True when the model `x -> y` fits at least as well as `y -> x`.
    pub fn prefers_forward(&self) -> bool {
        self.forward.p_value >= self.backward.p_value
    }
}

pub fn anm_direction_score(x: &[f64], y: &[f64], params: &RegressorParams) -> Result<AnmScore> {
    let xm = Matrix::from_column_slice(x.len(), 1, x);
    let ym = Matrix::from_column_slice(y.len(), 1, y);
    Ok(AnmScore {
        forward: residual_independence(&xm, y, params)?,
        backward: residual_independence(&ym, x, params)?,
    })
}
