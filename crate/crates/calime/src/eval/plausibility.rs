//! Distance- and outlier-based plausibility of synthetic neighborhoods.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::neighbors::{knn, nearest_distance};
use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::kernel::rows;
use crate::ks::quantile;
use crate::rng::{child_rng, Rng as ChaRng};

/// Mean distance from each row of `z` to its nearest reference row. Rows of
/// `reference` equal to `x` are excluded. With `stats`, all three are
/// standardized first.
pub fn amd(z: &Matrix, reference: &Matrix, x: &[f64], stats: Option<&ColumnStats>) -> Result<f64> {
    if z.ncols() != reference.ncols() || x.len() != reference.ncols() {
        return Err(Error::DimensionMismatch {
            expected: reference.ncols(),
            found: if z.ncols() != reference.ncols() {
                z.ncols()
            } else {
                x.len()
            },
        });
    }
    let keep: Vec<usize> = (0..reference.nrows())
        .filter(|&i| reference.row(i).iter().zip(x).any(|(a, b)| a != b))
        .collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput(
            "reference set is empty after excluding the instance".into(),
        ));
    }
    if z.nrows() == 0 {
        return Ok(0.0);
    }
    let reference = reference.select_rows(&keep);
    let (z, reference) = match stats {
        Some(s) => (s.standardize(z), s.standardize(&reference)),
        None => (z.clone(), reference),
    };
    let refs = rows(&reference);
    // Collected before summing so the result does not depend on thread count.
    let dists: Vec<f64> = rows(&z)
        .par_iter()
        .map(|q| nearest_distance(q, &refs))
        .collect();
    let total: f64 = dists.iter().sum();
    Ok(total / z.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierParams {
    pub lof_neighbors: usize,
    pub lof_threshold: f64,
    pub abod_neighbors: usize,
    /// Reference-score percentile below which ABOD flags a sample.
    pub abod_percentile: f64,
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    /// Reference-score percentile above which the isolation forest flags.
    pub iforest_percentile: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            lof_neighbors: 20,
            lof_threshold: 1.5,
            abod_neighbors: 10,
            abod_percentile: 0.05,
            iforest_trees: 100,
            iforest_subsample: 256,
            iforest_percentile: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutlierCounts {
    pub lof: usize,
    pub abod: usize,
    pub iforest: usize,
}

impl OutlierCounts {
    /// Mean of the three counts.
    pub fn aos(&self) -> f64 {
        aos(*self)
    }
}

pub fn aos(c: OutlierCounts) -> f64 {
    (c.lof + c.abod + c.iforest) as f64 / 3.0
}

/// Mean of the three counts divided by the neighborhood size.
pub fn aos_normalized(c: OutlierCounts, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        aos(c) / n as f64
    }
}

/// Local outlier factor in novelty mode.
struct Lof {
    reference: Vec<Vec<f64>>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
    k: usize,
}

/// Guards reachability densities against duplicate points.
const LRD_EPS: f64 = 1e-10;

impl Lof {
    fn fit(reference: Vec<Vec<f64>>, k: usize) -> Self {
        let neigh: Vec<Vec<(f64, usize)>> = (0..reference.len())
            .into_par_iter()
            .map(|i| knn(&reference[i], &reference, k, Some(i)))
            .collect();
        let k_distance: Vec<f64> = neigh
            .iter()
            .map(|n| n.last().map_or(0.0, |x| x.0))
            .collect();
        let lrd = neigh
            .iter()
            .map(|n| {
                let reach: f64 =
                    n.iter().map(|&(d, o)| d.max(k_distance[o])).sum::<f64>() / n.len() as f64;
                1.0 / (reach + LRD_EPS)
            })
            .collect();
        Self {
            reference,
            k_distance,
            lrd,
            k,
        }
    }

    fn score(&self, q: &[f64]) -> f64 {
        let n = knn(q, &self.reference, self.k, None);
        let reach: f64 = n
            .iter()
            .map(|&(d, o)| d.max(self.k_distance[o]))
            .sum::<f64>()
            / n.len() as f64;
        let lrd_q = 1.0 / (reach + LRD_EPS);
        n.iter().map(|&(_, o)| self.lrd[o]).sum::<f64>() / n.len() as f64 / lrd_q
    }
}

/// Angle-based outlier factor over the k nearest reference points: the
/// variance of `<a-p, b-p> / (|a-p|² |b-p|²)` over neighbor pairs.
struct Abod {
    reference: Vec<Vec<f64>>,
    k: usize,
    threshold: f64,
}

impl Abod {
    fn factor(&self, q: &[f64], skip: Option<usize>) -> f64 {
        let neigh = knn(q, &self.reference, self.k, skip);
        let diffs: Vec<Vec<f64>> = neigh
            .iter()
            .filter(|(d, _)| *d > 0.0)
            .map(|&(_, o)| {
                self.reference[o]
                    .iter()
                    .zip(q)
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        let mut vals = Vec::new();
        for i in 0..diffs.len() {
            for j in (i + 1)..diffs.len() {
                let dot: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
                let ni: f64 = diffs[i].iter().map(|v| v * v).sum();
                let nj: f64 = diffs[j].iter().map(|v| v * v).sum();
                vals.push(dot / (ni * nj));
            }
        }
        if vals.is_empty() {
            return 0.0;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
    }

    fn fit(reference: Vec<Vec<f64>>, k: usize, percentile: f64) -> Self {
        let mut a = Self {
            reference,
            k,
            threshold: 0.0,
        };
        let scores: Vec<f64> = (0..a.reference.len())
            .into_par_iter()
            .map(|i| a.factor(&a.reference[i], Some(i)))
            .collect();
        a.threshold = quantile(&scores, percentile);
        a
    }
}

enum ITree {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        value: f64,
        left: Box<ITree>,
        right: Box<ITree>,
    },
}

/// Expected path length of an unsuccessful search in a BST of `n` nodes.
fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + 0.577_215_664_901_532_9) - 2.0 * (n - 1.0) / n
        }
    }
}

impl ITree {
    fn grow(points: &[&Vec<f64>], depth: usize, limit: usize, rng: &mut ChaRng) -> ITree {
        if depth >= limit || points.len() <= 1 {
            return ITree::Leaf { size: points.len() };
        }
        let m = points[0].len();
        let ranges: Vec<(usize, f64, f64)> = (0..m)
            .filter_map(|j| {
                let lo = points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
                let hi = points
                    .iter()
                    .map(|p| p[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return ITree::Leaf { size: points.len() };
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let value = lo + (hi - lo) * rng.random::<f64>();
        let (l, r): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) =
            points.iter().partition(|p| p[feature] < value);
        ITree::Split {
            feature,
            value,
            left: Box::new(ITree::grow(&l, depth + 1, limit, rng)),
            right: Box::new(ITree::grow(&r, depth + 1, limit, rng)),
        }
    }

    fn path_length(&self, q: &[f64]) -> f64 {
        let mut node = self;
        let mut depth = 0.0;
        loop {
            match node {
                ITree::Leaf { size } => return depth + c_factor(*size),
                ITree::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if q[*feature] < *value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

struct IsolationForest {
    trees: Vec<ITree>,
    psi: usize,
    threshold: f64,
}

impl IsolationForest {
    fn fit(
        reference: &[Vec<f64>],
        n_trees: usize,
        subsample: usize,
        percentile: f64,
        seed: u64,
    ) -> Self {
        let psi = subsample.min(reference.len());
        let limit = (psi as f64).log2().ceil().max(0.0) as usize;
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = child_rng(seed, t as u64);
                let idx = sample_indices(&mut rng, reference.len(), psi).into_vec();
                let pts: Vec<&Vec<f64>> = idx.iter().map(|&i| &reference[i]).collect();
                ITree::grow(&pts, 0, limit, &mut rng)
            })
            .collect();
        let mut f = Self {
            trees,
            psi,
            threshold: 0.0,
        };
        let scores: Vec<f64> = reference.par_iter().map(|r| f.score(r)).collect();
        f.threshold = quantile(&scores, percentile);
        f
    }

    /// Anomaly score in (0, 1]; larger is more anomalous.
    fn score(&self, q: &[f64]) -> f64 {
        let mean =
            self.trees.iter().map(|t| t.path_length(q)).sum::<f64>() / self.trees.len() as f64;
        let c = c_factor(self.psi);
        if c == 0.0 {
            return 0.5;
        }
        2f64.powf(-mean / c)
    }
}

/// The three outlier detectors fit once on a standardized reference set.
pub struct OutlierDetectors {
    stats: ColumnStats,
    params: OutlierParams,
    lof: Lof,
    abod: Abod,
    iforest: IsolationForest,
}

impl OutlierDetectors {
    /// `stats` standardizes both the reference and every later query.
    pub fn fit(
        reference: &Matrix,
        stats: &ColumnStats,
        params: &OutlierParams,
        seed: u64,
    ) -> Result<Self> {
        let need = params.lof_neighbors.max(params.abod_neighbors) + 1;
        if reference.nrows() < need {
            return Err(Error::TooFewSamples {
                needed: need,
                got: reference.nrows(),
            });
        }
        let r = rows(&stats.standardize(reference));
        Ok(Self {
            stats: stats.clone(),
            params: *params,
            lof: Lof::fit(r.clone(), params.lof_neighbors),
            abod: Abod::fit(r.clone(), params.abod_neighbors, params.abod_percentile),
            iforest: IsolationForest::fit(
                &r,
                params.iforest_trees,
                params.iforest_subsample,
                params.iforest_percentile,
                seed,
            ),
        })
    }

    /// Number of rows of `z` each detector flags.
    pub fn counts(&self, z: &Matrix) -> OutlierCounts {
        let q = rows(&self.stats.standardize(z));
        let flags: Vec<(bool, bool, bool)> = q
            .par_iter()
            .map(|p| {
                (
                    self.lof.score(p) > self.params.lof_threshold,
                    self.abod.factor(p, None) < self.abod.threshold,
                    self.iforest.score(p) > self.iforest.threshold,
                )
            })
            .collect();
        OutlierCounts {
            lof: flags.iter().filter(|f| f.0).count(),
            abod: flags.iter().filter(|f| f.1).count(),
            iforest: flags.iter().filter(|f| f.2).count(),
        }
    }
}
