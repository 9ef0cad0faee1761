use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roots::{fit_root_distributions, RootDistributions};
use crate::causal::CausalGraph;
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::models::{fit_regressor, KernelRidge, RegressorParams};
use crate::rng::{child_rng, Rng as ChaRng};

/// Rows generated per independently seeded work unit.
pub const CHUNK_ROWS: usize = 256;

/// One fitted regressor per dependent node, keyed by node index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressorSet {
    models: BTreeMap<usize, KernelRidge>,
}

impl RegressorSet {
    pub fn get(&self, j: usize) -> Option<&KernelRidge> {
        self.models.get(&j)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &KernelRidge)> {
        self.models.iter().map(|(&j, m)| (j, m))
    }
}

pub fn fit_regressors(
    g: &CausalGraph,
    x: &Dataset,
    params: &RegressorParams,
) -> Result<RegressorSet> {
    if g.n_nodes() != x.n_features() {
        return Err(Error::DimensionMismatch {
            expected: x.n_features(),
            found: g.n_nodes(),
        });
    }
    let models = g
        .dependents()
        .into_par_iter()
        .map(|j| {
            let inputs = x.values().select_columns(g.parents(j));
            fit_regressor(&inputs, &x.column(j), params).map(|m| (j, m))
        })
        .collect::<Result<_>>()?;
    Ok(RegressorSet { models })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Regressor output only.
    None,
    /// Regressor output plus a uniformly drawn training residual.
    #[default]
    ResidualBootstrap,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseMode::None),
            "residual_bootstrap" | "bootstrap" => Ok(NoiseMode::ResidualBootstrap),
            _ => Err(Error::Config(format!("unknown noise mode '{s}'"))),
        }
    }
}

/// How many roots each sample perturbs and how dependents are regenerated.
/// Unset bounds resolve to `[min(2, roots), roots]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub q_min: Option<usize>,
    pub q_max: Option<usize>,
    pub noise_mode: NoiseMode,
}

impl SamplerConfig {
    pub fn resolve(&self, n_roots: usize) -> Result<(usize, usize)> {
        let lo = self.q_min.unwrap_or(2.min(n_roots));
        let hi = self.q_max.unwrap_or(n_roots);
        if lo < 1 || lo > hi || hi > n_roots {
            return Err(Error::Config(format!(
                "need 1 <= q_min <= q_max <= {n_roots} roots, got q_min = {lo}, q_max = {hi}"
            )));
        }
        Ok((lo, hi))
    }
}

/// Everything needed to generate causal neighborhoods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub graph: CausalGraph,
    pub roots: RootDistributions,
    pub regressors: RegressorSet,
}

impl GeneratorModel {
    pub fn fit(graph: CausalGraph, x: &Dataset, params: &RegressorParams) -> Result<Self> {
        let roots = fit_root_distributions(&graph, x)?;
        let regressors = fit_regressors(&graph, x, params)?;
        Ok(Self {
            graph,
            roots,
            regressors,
        })
    }

    pub fn n_features(&self) -> usize {
        self.graph.n_nodes()
    }
}

/// One causal perturbation of `x`, also returning which coordinates changed.
pub fn sample_neighbor_marked<R: Rng + ?Sized>(
    x: &[f64],
    model: &GeneratorModel,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let m = model.n_features();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    let roots = model.graph.roots();
    let (lo, hi) = cfg.resolve(roots.len())?;
    let q = rng.random_range(lo..=hi);
    let mut z = x.to_vec();
    let mut changed = vec![false; m];
    for pick in sample_indices(rng, roots.len(), q).into_vec() {
        let j = roots[pick];
        let fit = model
            .roots
            .get(j)
            .ok_or_else(|| Error::InvalidInput(format!("no root distribution for feature {j}")))?;
        z[j] = fit.family.sample(rng);
        changed[j] = true;
    }
    for &j in model.graph.topological_order() {
        let parents = model.graph.parents(j);
        if parents.is_empty() || !parents.iter().any(|&p| changed[p]) {
            continue;
        }
        let reg = model
            .regressors
            .get(j)
            .ok_or_else(|| Error::InvalidInput(format!("no regressor for feature {j}")))?;
        let inputs: Vec<f64> = parents.iter().map(|&p| z[p]).collect();
        let mut v = reg.predict_one(&inputs);
        if cfg.noise_mode == NoiseMode::ResidualBootstrap {
            let r = reg.residuals();
            v += r[rng.random_range(0..r.len())];
        }
        z[j] = v;
        changed[j] = true;
    }
    Ok((z, changed))
}

pub fn sample_neighbor<R: Rng + ?Sized>(
    x: &[f64],
    model: &GeneratorModel,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sample_neighbor_marked(x, model, cfg, rng).map(|(z, _)| z)
}

/// `n` causal perturbations of `x` as rows. Chunk `c` of [`CHUNK_ROWS`] rows
/// draws from stream `c` of `seed`, so output is independent of thread count.
pub fn generate_neighborhood(
    x: &[f64],
    model: &GeneratorModel,
    cfg: &SamplerConfig,
    n: usize,
    seed: u64,
) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "neighborhood size must be at least 1".into(),
        ));
    }
    let m = model.n_features();
    let chunks: Vec<Vec<Vec<f64>>> = (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let mut rng: ChaRng = child_rng(seed, c as u64);
            let rows = CHUNK_ROWS.min(n - c * CHUNK_ROWS);
            (0..rows)
                .map(|_| sample_neighbor(x, model, cfg, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut z = Matrix::zeros(n, m);
    for (i, row) in chunks.iter().flatten().enumerate() {
        for (j, v) in row.iter().enumerate() {
            z[(i, j)] = *v;
        }
    }
    Ok(z)
}
