//! Distributional similarity between a neighborhood and reference data.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::kernel::{rows, sq_dist};
use crate::ks::{ks_two_sample, quantile_sorted};
use crate::rng::{child_rng, Rng as ChaRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmParams {
    pub components: Vec<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Added to every covariance diagonal.
    pub reg_covar: f64,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            components: vec![1, 2, 4, 8],
            restarts: 5,
            max_iter: 200,
            tol: 1e-6,
            reg_covar: 1e-6,
        }
    }
}

/// Full-covariance Gaussian mixture.
#[derive(Debug, Clone)]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    /// Lower Cholesky factors of the covariances.
    chol: Vec<Matrix>,
    log_norm: Vec<f64>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl Gmm {
    fn from_parts(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<Matrix>,
        reg: f64,
    ) -> Option<Self> {
        let d = means[0].len();
        let mut chol = Vec::with_capacity(covs.len());
        let mut log_norm = Vec::with_capacity(covs.len());
        for c in covs {
            let mut jitter = reg;
            let l = loop {
                let a = &c + Matrix::identity(d, d) * jitter;
                if let Some(ch) = Cholesky::<f64, Dyn>::new(a) {
                    break ch.l();
                }
                jitter *= 10.0;
                if jitter > 1e6 {
                    return None;
                }
            };
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norm.push(-0.5 * (d as f64 * LN_2PI + log_det));
            chol.push(l);
        }
        Some(Self {
            weights,
            means,
            chol,
            log_norm,
        })
    }

    /// Per-component `ln w_c + ln N(x | c)`.
    fn joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.len())
            .map(|c| {
                let diff = DVector::from_fn(x.len(), |j, _| x[j] - self.means[c][j]);
                let sol = self.chol[c]
                    .solve_lower_triangular(&diff)
                    .expect("positive diagonal");
                self.weights[c].ln() + self.log_norm[c] - 0.5 * sol.norm_squared()
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint(x))
    }

    pub fn mean_log_likelihood(&self, x: &[Vec<f64>]) -> f64 {
        let ll: Vec<f64> = x.par_iter().map(|r| self.log_likelihood(r)).collect();
        ll.iter().sum::<f64>() / x.len() as f64
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn kmeans_pp(x: &[Vec<f64>], k: usize, rng: &mut ChaRng) -> Vec<Vec<f64>> {
    let mut centers = vec![x[rng.random_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = x.len() - 1;
            for (i, &v) in d2.iter().enumerate() {
                if t < v {
                    pick = i;
                    break;
                }
                t -= v;
            }
            pick
        } else {
            rng.random_range(0..x.len())
        };
        centers.push(x[next].clone());
        for (i, p) in x.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// M-step from responsibilities `resp[i][c]`.
fn m_step(x: &[Vec<f64>], resp: &[Vec<f64>], k: usize, reg: f64) -> Option<Gmm> {
    let (n, d) = (x.len(), x[0].len());
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum::<f64>() + 10.0 * f64::EPSILON;
        let mut mu = DVector::zeros(d);
        for (i, p) in x.iter().enumerate() {
            for j in 0..d {
                mu[j] += resp[i][c] * p[j];
            }
        }
        mu /= nk;
        let mut cov = Matrix::zeros(d, d);
        for (i, p) in x.iter().enumerate() {
            let r = resp[i][c];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = p[a] - mu[a];
                for b in 0..=a {
                    cov[(a, b)] += r * da * (p[b] - mu[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        cov /= nk;
        weights.push(nk / n as f64);
        means.push(mu);
        covs.push(cov);
    }
    Gmm::from_parts(weights, means, covs, reg)
}

fn fit_once(x: &[Vec<f64>], k: usize, params: &GmmParams, rng: &mut ChaRng) -> Option<(Gmm, f64)> {
    let centers = kmeans_pp(x, k, rng);
    let resp: Vec<Vec<f64>> = x
        .iter()
        .map(|p| {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .expect("k >= 1");
            (0..k).map(|c| if c == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut gmm = m_step(x, &resp, k, params.reg_covar)?;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..params.max_iter {
        let (resp, ll): (Vec<Vec<f64>>, Vec<f64>) = x
            .iter()
            .map(|p| {
                let j = gmm.joint(p);
                let lse = log_sum_exp(&j);
                (j.iter().map(|v| (v - lse).exp()).collect(), lse)
            })
            .unzip();
        let mean_ll = ll.iter().sum::<f64>() / x.len() as f64;
        gmm = m_step(x, &resp, k, params.reg_covar)?;
        if (mean_ll - prev).abs() < params.tol {
            break;
        }
        prev = mean_ll;
    }
    let ll = gmm.mean_log_likelihood(x);
    Some((gmm, ll))
}

/// Best-of-restarts mixture for each configured component count.
pub struct GmmBank {
    stats: ColumnStats,
    models: Vec<Gmm>,
}

impl GmmBank {
    /// Fit on `reference` standardized with `stats`. Component counts larger
    /// than the row count are skipped.
    pub fn fit(
        reference: &Matrix,
        stats: &ColumnStats,
        params: &GmmParams,
        seed: u64,
    ) -> Result<Self> {
        if reference.nrows() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: reference.nrows(),
            });
        }
        let x = rows(&stats.standardize(reference));
        let models: Vec<Gmm> = params
            .components
            .par_iter()
            .filter(|&&k| k >= 1 && k <= x.len())
            .filter_map(|&k| {
                (0..params.restarts.max(1))
                    .filter_map(|r| {
                        fit_once(&x, k, params, &mut child_rng(seed, (k * 1000 + r) as u64))
                    })
                    .fold(None::<(Gmm, f64)>, |best, cur| match best {
                        Some(b) if b.1 >= cur.1 => Some(b),
                        _ => Some(cur),
                    })
                    .map(|(g, _)| g)
            })
            .collect();
        if models.is_empty() {
            return Err(Error::Degenerate("no mixture model could be fit".into()));
        }
        Ok(Self {
            stats: stats.clone(),
            models,
        })
    }

    /// Per-row log-likelihood of `z`, averaged over rows and over models.
    pub fn mean_log_likelihood(&self, z: &Matrix) -> f64 {
        let x = rows(&self.stats.standardize(z));
        if x.is_empty() {
            return 0.0;
        }
        self.models
            .iter()
            .map(|g| g.mean_log_likelihood(&x))
            .sum::<f64>()
            / self.models.len() as f64
    }

    pub fn models(&self) -> &[Gmm] {
        &self.models
    }
}

fn check_pair(reference: &Matrix, z: &Matrix) -> Result<()> {
    if reference.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: reference.ncols(),
            found: z.ncols(),
        });
    }
    if reference.nrows() < 2 || z.nrows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: reference.nrows().min(z.nrows()),
        });
    }
    Ok(())
}

/// Mean over columns of `1 - D`, with `D` the two-sample KS distance.
pub fn ks_score(reference: &Matrix, z: &Matrix) -> Result<f64> {
    check_pair(reference, z)?;
    let m = reference.ncols();
    let total: f64 = (0..m)
        .map(|j| 1.0 - ks_two_sample(reference.column(j).as_slice(), z.column(j).as_slice()))
        .sum();
    Ok(total / m as f64)
}

pub const KL_BINS: usize = 20;

/// Interior bin edges at reference quantiles, deduplicated.
fn edges(col: &[f64], bins: usize) -> Vec<f64> {
    let mut s = col.to_vec();
    s.sort_by(f64::total_cmp);
    let mut e: Vec<f64> = (1..bins)
        .map(|b| quantile_sorted(&s, b as f64 / bins as f64))
        .collect();
    e.dedup();
    e
}

fn bin_of(v: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= v)
}

/// Laplace-smoothed cell probabilities.
fn histogram(data: &Matrix, cols: &[usize], edges: &[Vec<f64>]) -> Vec<f64> {
    let shape: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
    let cells: usize = shape.iter().product();
    let mut h = vec![1.0; cells];
    for i in 0..data.nrows() {
        let mut idx = 0;
        for (c, &j) in cols.iter().enumerate() {
            idx = idx * shape[c] + bin_of(data[(i, j)], &edges[c]);
        }
        h[idx] += 1.0;
    }
    let total = (data.nrows() + cells) as f64;
    h.iter_mut().for_each(|v| *v /= total);
    h
}

fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Mean over column pairs of `1 / (1 + KL(Q_z || P_ref))` on
/// [`KL_BINS`]-per-axis histograms binned at reference quantiles. A single
/// column falls back to its one-dimensional histogram.
pub fn kl_score(reference: &Matrix, z: &Matrix) -> Result<f64> {
    check_pair(reference, z)?;
    let m = reference.ncols();
    let e: Vec<Vec<f64>> = (0..m)
        .map(|j| edges(reference.column(j).as_slice(), KL_BINS))
        .collect();
    let groups: Vec<Vec<usize>> = if m == 1 {
        vec![vec![0]]
    } else {
        (0..m)
            .flat_map(|i| ((i + 1)..m).map(move |j| vec![i, j]))
            .collect()
    };
    let scores: Vec<f64> = groups
        .par_iter()
        .map(|g| {
            let ge: Vec<Vec<f64>> = g.iter().map(|&j| e[j].clone()).collect();
            let p = histogram(reference, g, &ge);
            let q = histogram(z, g, &ge);
            1.0 / (1.0 + kl(&q, &p))
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / groups.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalMetrics {
    pub gm_loglik: f64,
    pub ks_score: f64,
    pub kl_score: f64,
}

pub fn statistical_metrics(
    bank: &GmmBank,
    reference: &Matrix,
    z: &Matrix,
) -> Result<StatisticalMetrics> {
    Ok(StatisticalMetrics {
        gm_loglik: bank.mean_log_likelihood(z),
        ks_score: ks_score(reference, z)?,
        kl_score: kl_score(reference, z)?,
    })
}

/// Aggregate statistical error per entry: mean of `1 - ks`, `1 - kl` and the
/// negative log-likelihood min-max normalized across `entries`.
pub fn asm(entries: &[StatisticalMetrics]) -> Vec<f64> {
    let nll: Vec<f64> = entries.iter().map(|s| -s.gm_loglik).collect();
    let lo = nll.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = nll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    entries
        .iter()
        .zip(&nll)
        .map(|(s, &v)| {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            ((1.0 - s.ks_score) + (1.0 - s.kl_score) + norm) / 3.0
        })
        .collect()
}
