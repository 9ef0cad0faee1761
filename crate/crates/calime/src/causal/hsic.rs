//! Hilbert-Schmidt independence criterion with RBF kernels.
//!
//! The statistic is the biased V-statistic `HSIC_b = tr(K H L H) / n²`;
//! kernel widths are the median pairwise distance of each (column-scaled)
//! input. The p-value comes from a two-moment gamma fit to the null
//! distribution of `n · HSIC_b`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::kernel::{median_pairwise_distance, rbf_gram};
use crate::rng::rng_from_seed;

pub const MIN_HSIC_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub p_value: f64,
    pub bandwidth_u: f64,
    pub bandwidth_v: f64,
}

fn as_column(v: &[f64]) -> Matrix {
    Matrix::from_column_slice(v.len(), 1, v)
}

fn scaled(x: &Matrix) -> Result<Matrix> {
    Ok(ColumnStats::from_matrix(x)?.standardize(x))
}

/// Double-centre a symmetric kernel matrix in place: `K ← H K H`.
fn centre(k: &mut Matrix) {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for j in 0..n {
        for i in 0..n {
            k[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
}

struct Grams {
    k: Matrix,
    l: Matrix,
    kc: Matrix,
    lc: Matrix,
    bw_u: f64,
    bw_v: f64,
}

fn grams(u: &Matrix, v: &Matrix) -> Result<Grams> {
    let n = u.nrows();
    if v.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.nrows(),
        });
    }
    if n < MIN_HSIC_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_HSIC_SAMPLES,
            got: n,
        });
    }
    let (us, vs) = (scaled(u)?, scaled(v)?);
    let bw_u = median_pairwise_distance(&us);
    let bw_v = median_pairwise_distance(&vs);
    let k = rbf_gram(&us, bw_u);
    let l = rbf_gram(&vs, bw_v);
    let mut kc = k.clone();
    let mut lc = l.clone();
    centre(&mut kc);
    centre(&mut lc);
    Ok(Grams {
        k,
        l,
        kc,
        lc,
        bw_u,
        bw_v,
    })
}

/// Independence test between two multivariate samples with equal row count.
pub fn hsic_test_multi(u: &Matrix, v: &Matrix) -> Result<HsicResult> {
    let g = grams(u, v)?;
    let n = u.nrows() as f64;
    let prod = g.kc.component_mul(&g.lc);
    let sum: f64 = prod.sum();
    let statistic = (sum / (n * n)).max(0.0);
    let test_stat = sum / n;

    // Null variance from the centred product, excluding the diagonal.
    let sq = prod.map(|x| (x / 6.0).powi(2));
    let var = (sq.sum() - sq.diagonal().sum()) / (n * (n - 1.0));
    let var = 72.0 * (n - 4.0) * (n - 5.0) / (n * (n - 1.0) * (n - 2.0) * (n - 3.0)) * var;

    let off_mean = |k: &Matrix| (k.sum() - k.diagonal().sum()) / (n * (n - 1.0));
    let (mu_x, mu_y) = (off_mean(&g.k), off_mean(&g.l));
    let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / n;

    let p_value = if var > 0.0 && mean > 0.0 && test_stat > 0.0 {
        let shape = mean * mean / var;
        let scale = var * n / mean;
        match Gamma::new(shape, 1.0 / scale) {
            Ok(dist) => dist.sf(test_stat).clamp(0.0, 1.0),
            Err(_) => 1.0,
        }
    } else {
        1.0
    };
    Ok(HsicResult {
        statistic,
        p_value,
        bandwidth_u: g.bw_u,
        bandwidth_v: g.bw_v,
    })
}

/// Independence test between two scalar samples.
pub fn hsic_test(u: &[f64], v: &[f64]) -> Result<HsicResult> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    hsic_test_multi(&as_column(u), &as_column(v))
}

/// Permutation null for the same statistic: `(HSIC_b, p-value)` from
/// `n_perm` seeded shuffles of `v`. Slow; meant as a reference.
pub fn hsic_permutation_test(u: &[f64], v: &[f64], n_perm: usize, seed: u64) -> Result<(f64, f64)> {
    let g = grams(&as_column(u), &as_column(v))?;
    let n = u.len();
    let stat_for = |perm: &[usize]| {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += g.kc[(i, j)] * g.lc[(perm[i], perm[j])];
            }
        }
        s / (n * n) as f64
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = stat_for(&identity);
    let mut rng = rng_from_seed(seed);
    let mut perm = identity.clone();
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if stat_for(&perm) >= observed {
            exceed += 1;
        }
    }
    Ok((observed.max(0.0), (exceed + 1) as f64 / (n_perm + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn constant_input_gives_zero_statistic() {
        let u = vec![3.0; 50];
        let v = normals(1, 50);
        let r = hsic_test(&u, &v).unwrap();
        assert!(r.statistic.abs() < 1e-15);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn identical_samples_are_dependent() {
        let u = normals(2, 200);
        let r = hsic_test(&u, &u).unwrap();
        assert!(r.p_value < 0.01, "{r:?}");
        let (_, p_perm) = hsic_permutation_test(&u, &u, 1000, 3).unwrap();
        assert!(p_perm < 0.01);
    }

    #[test]
    fn statistic_matches_permutation_reference() {
        let u = normals(4, 60);
        let v: Vec<f64> = normals(5, 60)
            .iter()
            .zip(&u)
            .map(|(a, b)| a + 0.5 * b * b)
            .collect();
        let gamma = hsic_test(&u, &v).unwrap();
        let (stat, _) = hsic_permutation_test(&u, &v, 10, 0).unwrap();
        assert!((gamma.statistic - stat).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            hsic_test(&[0.0; 10], &[0.0; 10]),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            hsic_test(&[0.0; 30], &[0.0; 31]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn joint_permutation_leaves_statistic_unchanged() {
        let u = normals(6, 40);
        let v: Vec<f64> = u.iter().map(|x| x.sin()).collect();
        let a = hsic_test(&u, &v).unwrap();
        let mut idx: Vec<usize> = (0..40).collect();
        idx.shuffle(&mut rng_from_seed(9));
        let up: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
        let vp: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
        let b = hsic_test(&up, &vp).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert!((a.p_value - b.p_value).abs() < 1e-9);
    }
}
