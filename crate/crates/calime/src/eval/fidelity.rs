use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient of determination with a flag for a constant target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2 {
    pub value: f64,
    /// The target had zero variance; `value` is reported as 0.
    pub degenerate: bool,
}

/// Unweighted `1 - SSE/SST`, with SST taken about the mean of `y`.
pub fn r2_score(y: &[f64], y_hat: &[f64]) -> Result<R2> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: y.len(),
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    // Rounding in the mean can leave a tiny SST for a constant target.
    if sst == 0.0 || y.iter().all(|&v| v == y[0]) {
        return Ok(R2 {
            value: 0.0,
            degenerate: true,
        });
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(R2 {
        value: 1.0 - sse / sst,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_mean_predictors() {
        let y = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(r2_score(&y, &y).unwrap().value, 1.0);
        let m = y.iter().sum::<f64>() / 4.0;
        assert!(r2_score(&y, &[m; 4]).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn constant_target_is_flagged() {
        let r = r2_score(&[0.4; 5], &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn hand_computed_value() {
        // SST = 2, SSE = 0.5
        let r = r2_score(&[0.0, 1.0, 2.0], &[0.5, 1.0, 1.5]).unwrap();
        assert!((r.value - 0.75).abs() < 1e-15);
        assert!(r2_score(&[1.0], &[1.0]).is_err());
    }
}
