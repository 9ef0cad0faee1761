//! Per-root marginal distributions chosen by minimum KS distance.

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{
    ContinuousCDF, Exp as ExpCdf, LogNormal as LogNormalCdf, Normal as NormalCdf,
};

use crate::causal::CausalGraph;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ks::{ks_one_sample, quantile_sorted};

pub const MIN_ROOT_ROWS: usize = 20;
/// Best parametric fits worse than this fall back to the empirical sampler.
pub const EMPIRICAL_FALLBACK_KS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RootFamily {
    Normal {
        mean: f64,
        std: f64,
    },
    Uniform {
        min: f64,
        max: f64,
    },
    Exponential {
        loc: f64,
        rate: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Resample the observed values and add Gaussian jitter of width `jitter`.
    Empirical {
        values: Vec<f64>,
        jitter: f64,
    },
}

impl RootFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            RootFamily::Normal { .. } => "normal",
            RootFamily::Uniform { .. } => "uniform",
            RootFamily::Exponential { .. } => "exponential",
            RootFamily::Lognormal { .. } => "lognormal",
            RootFamily::Empirical { .. } => "empirical",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            RootFamily::Normal { mean, std } => NormalCdf::new(mean, std)
                .map(|d| d.cdf(x))
                .unwrap_or(f64::NAN),
            RootFamily::Uniform { min, max } => ((x - min) / (max - min)).clamp(0.0, 1.0),
            RootFamily::Exponential { loc, rate } => ExpCdf::new(rate)
                .map(|d| d.cdf(x - loc))
                .unwrap_or(f64::NAN),
            RootFamily::Lognormal { mu, sigma } => LogNormalCdf::new(mu, sigma)
                .map(|d| d.cdf(x))
                .unwrap_or(f64::NAN),
            RootFamily::Empirical { ref values, .. } => {
                values.partition_point(|&v| v <= x) as f64 / values.len() as f64
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RootFamily::Normal { mean, std } => Normal::new(*mean, *std)
                .expect("validated at fit")
                .sample(rng),
            RootFamily::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
            RootFamily::Exponential { loc, rate } => {
                loc + Exp::new(*rate).expect("validated at fit").sample(rng)
            }
            RootFamily::Lognormal { mu, sigma } => LogNormal::new(*mu, *sigma)
                .expect("validated at fit")
                .sample(rng),
            RootFamily::Empirical { values, jitter } => {
                let v = values[rng.random_range(0..values.len())];
                if *jitter > 0.0 {
                    v + jitter * rng.sample::<f64, _>(StandardNormal)
                } else {
                    v
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootFit {
    pub feature: usize,
    #[serde(flatten)]
    pub family: RootFamily,
    /// KS distance of the best parametric candidate; for an empirical
    /// fallback this is the distance that triggered it.
    pub ks_distance: f64,
}

/// Fitted marginal sampler for every root of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootDistributions {
    fits: Vec<RootFit>,
}

impl RootDistributions {
    pub fn get(&self, feature: usize) -> Option<&RootFit> {
        self.fits.iter().find(|f| f.feature == feature)
    }

    pub fn fits(&self) -> &[RootFit] {
        &self.fits
    }

    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn candidates(sorted: &[f64]) -> Vec<RootFamily> {
    let (mean, std) = mean_std(sorted);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let mut out = vec![
        RootFamily::Normal { mean, std },
        RootFamily::Uniform { min, max },
    ];
    if mean > min {
        out.push(RootFamily::Exponential {
            loc: min,
            rate: 1.0 / (mean - min),
        });
    }
    if min > 0.0 {
        let logs: Vec<f64> = sorted.iter().map(|v| v.ln()).collect();
        let (mu, sigma) = mean_std(&logs);
        if sigma > 0.0 {
            out.push(RootFamily::Lognormal { mu, sigma });
        }
    }
    out
}

/// Silverman's rule-of-thumb bandwidth.
fn silverman(sorted: &[f64]) -> f64 {
    let (_, std) = mean_std(sorted);
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    0.9 * spread * (sorted.len() as f64).powf(-0.2)
}

/// Fit the marginal of one column.
pub fn fit_root_column(feature: usize, values: &[f64]) -> Result<RootFit> {
    if values.len() < MIN_ROOT_ROWS {
        return Err(Error::TooFewSamples {
            needed: MIN_ROOT_ROWS,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(RootFit {
            feature,
            family: RootFamily::Empirical {
                values: vec![sorted[0]],
                jitter: 0.0,
            },
            ks_distance: 0.0,
        });
    }
    let (family, ks_distance) = candidates(&sorted)
        .into_iter()
        .map(|f| {
            let d = ks_one_sample(&sorted, |x| f.cdf(x));
            (f, d)
        })
        .fold(None::<(RootFamily, f64)>, |best, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .expect("at least two candidates");
    let family = if ks_distance > EMPIRICAL_FALLBACK_KS {
        let jitter = silverman(&sorted);
        RootFamily::Empirical {
            values: sorted,
            jitter,
        }
    } else {
        family
    };
    Ok(RootFit {
        feature,
        family,
        ks_distance,
    })
}

pub fn fit_root_distributions(g: &CausalGraph, x: &Dataset) -> Result<RootDistributions> {
    if g.n_nodes() != x.n_features() {
        return Err(Error::DimensionMismatch {
            expected: x.n_features(),
            found: g.n_nodes(),
        });
    }
    let fits = g
        .roots()
        .into_iter()
        .map(|j| fit_root_column(j, x.column(j).as_slice()))
        .collect::<Result<_>>()?;
    Ok(RootDistributions { fits })
}
