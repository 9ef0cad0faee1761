//! Order-then-prune causal discovery under additive noise.
//!
//! The causal order is found sink-first: the node whose regression on all
//! remaining nodes leaves the most independent residual is removed and
//! placed last. Edges from every predecessor are then pruned one at a time
//! while the residual of the reduced regression stays independent of all
//! predecessors.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anm::regression_residuals;
use super::graph::CausalGraph;
use super::hsic::{hsic_test_multi, MIN_HSIC_SAMPLES};
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::models::RegressorParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryParams {
    /// Significance level of the independence tests.
    pub alpha: f64,
    pub regressor: RegressorParams,
    /// Rows beyond this count are thinned by a fixed stride before discovery,
    /// bounding the cubic cost of the kernel solves.
    pub max_rows: usize,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            regressor: RegressorParams::default(),
            max_rows: 1000,
        }
    }
}

fn columns(x: &Matrix, cols: &[usize]) -> Matrix {
    x.select_columns(cols)
}

fn column(x: &Matrix, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

/// p-value of the residual of `target ~ regressors` tested against `against`.
fn residual_p(
    x: &Matrix,
    target: usize,
    regressors: &[usize],
    against: &[usize],
    params: &RegressorParams,
) -> Result<f64> {
    let r = regression_residuals(&columns(x, regressors), &column(x, target), params)?;
    let rm = Matrix::from_column_slice(r.len(), 1, &r);
    Ok(hsic_test_multi(&columns(x, against), &rm)?.p_value)
}

/// Discover a DAG over the features of `data`. Zero-variance columns are
/// left as isolated roots.
pub fn discover(data: &Dataset, params: &DiscoveryParams) -> Result<CausalGraph> {
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            params.alpha
        )));
    }
    let n = data.n_rows();
    if n < MIN_HSIC_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_HSIC_SAMPLES,
            got: n,
        });
    }
    let stride = n.div_ceil(params.max_rows.max(MIN_HSIC_SAMPLES));
    let rows: Vec<usize> = (0..n).step_by(stride.max(1)).collect();
    let x = data.values().select_rows(&rows);
    let stats = data.column_stats()?;
    let names = data.columns().to_vec();

    let mut remaining: Vec<usize> = (0..data.n_features())
        .filter(|&j| !stats.is_constant(j))
        .collect();
    if remaining.len() < 2 {
        return Ok(CausalGraph::empty(names));
    }

    // Sink-first ordering.
    let mut reversed = Vec::with_capacity(remaining.len());
    let mut forced = false;
    while remaining.len() > 1 {
        let scores: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&k| {
                let others: Vec<usize> = remaining.iter().copied().filter(|&j| j != k).collect();
                residual_p(&x, k, &others, &others, &params.regressor).map(|p| (k, p))
            })
            .collect::<Result<_>>()?;
        let (sink, p) =
            scores
                .iter()
                .copied()
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                });
        if p <= params.alpha {
            forced = true;
            log::warn!(
                "no sink passes the independence test at alpha {}; taking '{}' (p = {p:.3e})",
                params.alpha,
                names[sink]
            );
        }
        reversed.push(sink);
        remaining.retain(|&j| j != sink);
    }
    reversed.push(remaining[0]);
    reversed.reverse();
    let order = reversed;

    // Prune each node's predecessor set.
    let pruned: Vec<Vec<(usize, f64)>> = (1..order.len())
        .into_par_iter()
        .map(|pos| -> Result<Vec<(usize, f64)>> {
            let k = order[pos];
            let preds = &order[..pos];
            let mut parents: Vec<usize> = preds.to_vec();
            let mut kept_p: BTreeMap<usize, f64> = BTreeMap::new();
            for &l in preds {
                let reduced: Vec<usize> = parents.iter().copied().filter(|&j| j != l).collect();
                let p = residual_p(&x, k, &reduced, preds, &params.regressor)?;
                if p > params.alpha {
                    parents = reduced;
                    kept_p.remove(&l);
                } else {
                    kept_p.insert(l, p);
                }
            }
            Ok(parents.iter().map(|&l| (l, kept_p[&l])).collect())
        })
        .collect::<Result<_>>()?;

    let mut edges = Vec::new();
    let mut p_values = BTreeMap::new();
    for (pos, kept) in pruned.iter().enumerate() {
        let child = order[pos + 1];
        for &(parent, p) in kept {
            edges.push((parent, child));
            p_values.insert((parent, child), p);
        }
    }
    let mut g = CausalGraph::new(names, &edges)?.with_p_values(p_values);
    g.forced_sink = forced;
    Ok(g)
}
