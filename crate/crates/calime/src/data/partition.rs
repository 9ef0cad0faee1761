use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// How many rows go to each of the black-box, causal-discovery and
/// explanation partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSizes {
    /// Explanation set of 100 rows (a third of the data when n < 300), the
    /// remainder split 70/30 between black-box training and discovery.
    #[default]
    Default,
    Counts {
        black_box: usize,
        causal: usize,
        explain: usize,
    },
    Fractions {
        black_box: f64,
        causal: f64,
        explain: f64,
    },
}

impl PartitionSizes {
    fn resolve(&self, n: usize) -> Result<[usize; 3]> {
        let sizes = match *self {
            PartitionSizes::Default => {
                let t = if n >= 300 { 100 } else { n / 3 };
                let rest = n - t;
                let b = (0.7 * rest as f64).round() as usize;
                [b, rest - b, t]
            }
            PartitionSizes::Counts {
                black_box,
                causal,
                explain,
            } => {
                if black_box + causal + explain != n {
                    return Err(Error::InvalidInput(format!(
                        "partition counts {black_box}+{causal}+{explain} do not cover {n} rows"
                    )));
                }
                [black_box, causal, explain]
            }
            PartitionSizes::Fractions {
                black_box,
                causal,
                explain,
            } => {
                let fs = [black_box, causal, explain];
                if fs.iter().any(|f| !(*f > 0.0)) || ((fs.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
                    return Err(Error::InvalidInput(format!(
                        "partition fractions {fs:?} must be positive and sum to 1"
                    )));
                }
                let b = (black_box * n as f64).round() as usize;
                let c = ((causal * n as f64).round() as usize).min(n - b.min(n));
                [b, c, n.saturating_sub(b + c)]
            }
        };
        if sizes.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "partition of {n} rows leaves an empty part: {sizes:?}"
            )));
        }
        Ok(sizes)
    }
}

/// Reproducibility record for a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub seed: u64,
    pub n_rows: usize,
    pub black_box: usize,
    pub causal: usize,
    pub explain: usize,
    pub stratified: bool,
}

/// The three disjoint row sets `X_b`, `X_c`, `X_t`.
#[derive(Debug, Clone)]
pub struct Partition {
    pub black_box: Dataset,
    pub causal: Dataset,
    pub explain: Dataset,
    pub manifest: PartitionManifest,
}

/// Shuffle rows with `seed` and cut them into black-box / causal / explain
/// parts. Sampling is unstratified.
pub fn partition(d: &Dataset, sizes: PartitionSizes, seed: u64) -> Result<Partition> {
    let n = d.n_rows();
    let [b, c, t] = sizes.resolve(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    Ok(Partition {
        black_box: d.select_rows(&order[..b]),
        causal: d.select_rows(&order[b..b + c]),
        explain: d.select_rows(&order[b + c..]),
        manifest: PartitionManifest {
            seed,
            n_rows: n,
            black_box: b,
            causal: c,
            explain: t,
            stratified: false,
        },
    })
}
