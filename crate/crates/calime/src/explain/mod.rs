//! Local surrogate explanations over random or causal neighborhoods.
//!
//! Both modes share everything except how the neighborhood `Z` is drawn:
//! `Z` is labelled with the black-box probability of the class predicted for
//! `x`, weighted by an exponential kernel on standardized distance to `x`,
//! and explained by a K-Lasso fit on standardized coordinates.

mod lime;
mod record;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, Dataset, Matrix};
use crate::error::{Error, Result};
use crate::eval::r2_score;
use crate::gencda::{generate_neighborhood, GeneratorModel, SamplerConfig};
use crate::models::{fit_k_lasso, BlackBox, LassoFit};
use crate::rng::derive_seed;

pub use lime::{kernel_weights, lime_neighborhood};
pub use record::{read_jsonl, write_jsonl, Explanation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lime,
    Calime,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Lime, Mode::Calime];

    fn stream(self) -> u64 {
        match self {
            Mode::Lime => 0,
            Mode::Calime => 1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Lime => "lime",
            Mode::Calime => "calime",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lime" => Ok(Mode::Lime),
            "calime" => Ok(Mode::Calime),
            _ => Err(Error::Config(format!(
                "unknown mode '{s}' (expected lime or calime)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainParams {
    pub n_samples: usize,
    /// Kernel width on standardized distances; `None` means `0.75 · √m`.
    pub sigma: Option<f64>,
    pub sampler: SamplerConfig,
}

impl Default for ExplainParams {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            sigma: None,
            sampler: SamplerConfig::default(),
        }
    }
}

impl ExplainParams {
    pub fn kernel_width(&self, m: usize) -> f64 {
        self.sigma.unwrap_or(0.75 * (m as f64).sqrt())
    }
}

/// Shared, read-only inputs of every explanation in a run.
#[derive(Clone, Copy)]
pub struct ExplainContext<'a> {
    pub black_box: &'a dyn BlackBox,
    /// Column statistics of the black-box training partition.
    pub stats: &'a ColumnStats,
    /// Required for [`Mode::Calime`].
    pub generator: Option<&'a GeneratorModel>,
    pub feature_names: &'a [String],
}

/// A labelled, weighted neighborhood of one instance.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub mode: Mode,
    pub x: Vec<f64>,
    /// Samples in the original feature space.
    pub z: Matrix,
    /// Samples standardized with the context statistics.
    pub z_std: Matrix,
    pub w: DVector<f64>,
    /// Black-box probability of `class` for each sample.
    pub y: DVector<f64>,
    pub class: usize,
    pub sigma: f64,
}

/// Seed of the neighborhood for one instance and mode.
pub fn instance_seed(master: u64, instance_id: usize, mode: Mode) -> u64 {
    derive_seed(derive_seed(master, instance_id as u64), mode.stream())
}

/// Label and weight an already drawn neighborhood.
pub fn neighborhood_from_samples(
    x: &[f64],
    z: Matrix,
    ctx: &ExplainContext<'_>,
    mode: Mode,
    sigma: f64,
) -> Result<Neighborhood> {
    let m = ctx.stats.n_features();
    if x.len() != m || z.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: if x.len() != m { x.len() } else { z.ncols() },
        });
    }
    if z.nrows() > 1 && (1..z.nrows()).all(|i| z.row(i) == z.row(0)) {
        return Err(Error::Degenerate(
            "all neighborhood samples are identical".into(),
        ));
    }
    let class = ctx.black_box.predict(&Matrix::from_row_slice(1, m, x))?[0];
    let proba = ctx.black_box.predict_proba(&z)?;
    let y = proba.column(class).into_owned();
    let w = kernel_weights(x, &z, ctx.stats, sigma)?;
    let z_std = ctx.stats.standardize(&z);
    Ok(Neighborhood {
        mode,
        x: x.to_vec(),
        z,
        z_std,
        w,
        y,
        class,
        sigma,
    })
}

pub fn build_neighborhood(
    x: &[f64],
    ctx: &ExplainContext<'_>,
    mode: Mode,
    params: &ExplainParams,
    seed: u64,
) -> Result<Neighborhood> {
    let z = match mode {
        Mode::Lime => lime_neighborhood(x, ctx.stats, params.n_samples, seed)?,
        Mode::Calime => {
            let g = ctx
                .generator
                .ok_or_else(|| Error::Config("calime mode needs a fitted generator".into()))?;
            generate_neighborhood(x, g, &params.sampler, params.n_samples, seed)?
        }
    };
    let sigma = params.kernel_width(ctx.stats.n_features());
    neighborhood_from_samples(x, z, ctx, mode, sigma)
}

/// Fit the K-Lasso surrogate of a neighborhood.
pub fn fit_surrogate(nbhd: &Neighborhood, k: usize) -> Result<LassoFit> {
    fit_k_lasso(&nbhd.z_std, &nbhd.y, &nbhd.w, k)
}

pub fn explain_neighborhood(
    nbhd: &Neighborhood,
    k: usize,
    instance_id: usize,
    features: &[String],
) -> Result<(Explanation, LassoFit)> {
    let fit = fit_surrogate(nbhd, k)?;
    let r2 = r2_score(nbhd.y.as_slice(), fit.predict(&nbhd.z_std).as_slice())?;
    let e = Explanation {
        instance_id,
        mode: nbhd.mode,
        class: nbhd.class,
        k,
        sigma: nbhd.sigma,
        n_samples: nbhd.z.nrows(),
        features: features.to_vec(),
        e: fit.coef.iter().copied().collect(),
        intercept: fit.intercept,
        local_r2: r2.value,
        r2_degenerate: r2.degenerate,
    };
    Ok((e, fit))
}

pub fn explain(
    x: &[f64],
    instance_id: usize,
    ctx: &ExplainContext<'_>,
    mode: Mode,
    k: usize,
    params: &ExplainParams,
    master_seed: u64,
) -> Result<Explanation> {
    let nbhd = build_neighborhood(
        x,
        ctx,
        mode,
        params,
        instance_seed(master_seed, instance_id, mode),
    )?;
    explain_neighborhood(&nbhd, k, instance_id, ctx.feature_names).map(|(e, _)| e)
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub explanations: Vec<Explanation>,
    /// `(instance id, error message)` for every instance that failed.
    pub failures: Vec<(usize, String)>,
}

/// Explain every row of `x_t`; failures are collected rather than fatal.
pub fn explain_batch(
    x_t: &Dataset,
    ctx: &ExplainContext<'_>,
    mode: Mode,
    k: usize,
    params: &ExplainParams,
    master_seed: u64,
) -> BatchOutcome {
    let results: Vec<(usize, Result<Explanation>)> = (0..x_t.n_rows())
        .into_par_iter()
        .map(|i| {
            let id = x_t.row_ids()[i];
            let x: Vec<f64> = x_t.row(i).iter().copied().collect();
            (id, explain(&x, id, ctx, mode, k, params, master_seed))
        })
        .collect();
    let mut out = BatchOutcome::default();
    for (id, r) in results {
        match r {
            Ok(e) => out.explanations.push(e),
            Err(err) => out.failures.push((id, err.to_string())),
        }
    }
    out
}
