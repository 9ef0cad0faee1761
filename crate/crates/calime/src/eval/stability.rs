use serde::{Deserialize, Serialize};

use super::neighbors::knn;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::kernel::rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub k_neighbors: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { k_neighbors: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lle {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Neighbors dropped because they coincide with the instance.
    pub duplicates_skipped: usize,
}

/// Local Lipschitz estimate of every explained instance: ratios
/// `|e_i - e| / |x_i - x|` over its `k` nearest other explained instances.
/// `instances` should already be standardized; row `i` pairs with
/// `explanations[i]`.
pub fn lle_stability(
    explanations: &[Vec<f64>],
    instances: &Matrix,
    cfg: &StabilityConfig,
) -> Result<Vec<Lle>> {
    let n = instances.nrows();
    if explanations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: explanations.len(),
        });
    }
    if cfg.k_neighbors < 1 || cfg.k_neighbors >= n {
        return Err(Error::InvalidInput(format!(
            "k_neighbors must lie in [1, {}), got {}",
            n, cfg.k_neighbors
        )));
    }
    let pts = rows(instances);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Take extra candidates so coincident rows can be dropped.
        let cand = knn(&pts[i], &pts, n - 1, Some(i));
        let dup = cand.iter().filter(|(d, _)| *d == 0.0).count();
        let ratios: Vec<f64> = cand
            .iter()
            .filter(|(d, _)| *d > 0.0)
            .take(cfg.k_neighbors)
            .map(|&(d, j)| {
                let num: f64 = explanations[i]
                    .iter()
                    .zip(&explanations[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                num / d
            })
            .collect();
        if dup > 0 {
            log::warn!("instance {i}: {dup} duplicate neighbor(s) excluded from stability");
        }
        if ratios.is_empty() {
            return Err(Error::Degenerate(format!(
                "instance {i} has no distinct neighbor"
            )));
        }
        out.push(Lle {
            mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
            min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            duplicates_skipped: dup,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_explanations_are_perfectly_stable() {
        let x = Matrix::from_fn(10, 2, |i, j| (i * 3 + j) as f64);
        let e = vec![vec![1.0, -2.0, 0.5]; 10];
        for l in lle_stability(&e, &x, &StabilityConfig::default()).unwrap() {
            assert_eq!((l.mean, l.min, l.max), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn single_neighbor_ratio() {
        let x = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let e = vec![vec![0.0, 0.0], vec![0.0, 2.0]];
        let l = lle_stability(&e, &x, &StabilityConfig { k_neighbors: 1 }).unwrap();
        assert_eq!(l[0].mean, 2.0);
    }

    #[test]
    fn linear_map_is_bounded_by_spectral_norm() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 0.0, 1.5]);
        let spectral = a.singular_values().max();
        let mut rng = rng_from_seed(3);
        let x = Matrix::from_fn(30, 3, |_, _| rng.sample(StandardNormal));
        let e: Vec<Vec<f64>> = (0..30)
            .map(|i| (&a * x.row(i).transpose()).iter().copied().collect())
            .collect();
        for l in lle_stability(&e, &x, &StabilityConfig::default()).unwrap() {
            assert!(l.max <= spectral + 1e-12);
        }
    }

    #[test]
    fn duplicates_are_skipped_and_bad_k_rejected() {
        let x = Matrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 3.0]);
        let e = vec![vec![0.0], vec![5.0], vec![1.0], vec![1.0]];
        let l = lle_stability(&e, &x, &StabilityConfig { k_neighbors: 1 }).unwrap();
        assert_eq!(l[0].duplicates_skipped, 1);
        assert_eq!(l[0].mean, 1.0);
        assert!(lle_stability(&e, &x, &StabilityConfig { k_neighbors: 4 }).is_err());
        assert!(lle_stability(&e, &x, &StabilityConfig { k_neighbors: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn min_mean_max_are_ordered(seed in 0u64..1000, n in 6usize..20) {
            let mut rng = rng_from_seed(seed);
            let x = Matrix::from_fn(n, 2, |_, _| rng.sample(StandardNormal));
            let e: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
            for l in lle_stability(&e, &x, &StabilityConfig::default()).unwrap() {
                prop_assert!(l.min <= l.mean + 1e-12 && l.mean <= l.max + 1e-12);
            }
        }
    }
}
