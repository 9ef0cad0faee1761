//! One-hidden-layer perceptron (ReLU, softmax) trained with mini-batch SGD
//! and momentum on cross-entropy. Inputs are z-scored internally.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// hidden × inputs, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// classes × hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
    n_in: usize,
    n_hidden: usize,
    n_classes: usize,
}

impl Mlp {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        params: &MlpParams,
        seed: u64,
    ) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if n == 0 || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if params.hidden == 0 || params.batch_size == 0 {
            return Err(Error::InvalidInput(
                "hidden units and batch size must be positive".into(),
            ));
        }
        let stats = ColumnStats::from_matrix(x)?;
        let scale: Vec<f64> = (0..d).map(|j| stats.scale(j)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| (x[(i, j)] - stats.mean[j]) / scale[j])
                    .collect()
            })
            .collect();

        let h = params.hidden;
        let mut rng = rng_from_seed(seed);
        let he1 = Normal::new(0.0, (2.0 / d as f64).sqrt()).unwrap();
        let he2 = Normal::new(0.0, (2.0 / h as f64).sqrt()).unwrap();
        let mut net = Mlp {
            mean: stats.mean.clone(),
            scale,
            w1: (0..h * d).map(|_| he1.sample(&mut rng)).collect(),
            b1: vec![0.0; h],
            w2: (0..n_classes * h).map(|_| he2.sample(&mut rng)).collect(),
            b2: vec![0.0; n_classes],
            n_in: d,
            n_hidden: h,
            n_classes,
        };
        let mut v_w1 = vec![0.0; h * d];
        let mut v_b1 = vec![0.0; h];
        let mut v_w2 = vec![0.0; n_classes * h];
        let mut v_b2 = vec![0.0; n_classes];

        let mut order: Vec<usize> = (0..n).collect();
        let mut hidden = vec![0.0; h];
        let mut out = vec![0.0; n_classes];
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let mut g_w1 = vec![0.0; h * d];
                let mut g_b1 = vec![0.0; h];
                let mut g_w2 = vec![0.0; n_classes * h];
                let mut g_b2 = vec![0.0; n_classes];
                for &i in batch {
                    let xi = &rows[i];
                    net.forward(xi, &mut hidden, &mut out);
                    // softmax cross-entropy gradient
                    out[y[i]] -= 1.0;
                    for c in 0..n_classes {
                        g_b2[c] += out[c];
                        for u in 0..h {
                            g_w2[c * h + u] += out[c] * hidden[u];
                        }
                    }
                    for u in 0..h {
                        if hidden[u] <= 0.0 {
                            continue;
                        }
                        let delta: f64 = (0..n_classes).map(|c| out[c] * net.w2[c * h + u]).sum();
                        g_b1[u] += delta;
                        for j in 0..d {
                            g_w1[u * d + j] += delta * xi[j];
                        }
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                let step = |w: &mut [f64], v: &mut [f64], g: &[f64], decay: bool| {
                    for ((wk, vk), gk) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                        let grad = gk * scale + if decay { params.l2 * *wk } else { 0.0 };
                        *vk = params.momentum * *vk - params.learning_rate * grad;
                        *wk += *vk;
                    }
                };
                step(&mut net.w1, &mut v_w1, &g_w1, true);
                step(&mut net.b1, &mut v_b1, &g_b1, false);
                step(&mut net.w2, &mut v_w2, &g_w2, true);
                step(&mut net.b2, &mut v_b2, &g_b2, false);
            }
        }
        Ok(net)
    }

    /// Forward pass on an already-scaled input; `out` receives probabilities.
    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (d, h) = (self.n_in, self.n_hidden);
        for u in 0..h {
            let a: f64 = self.b1[u] + (0..d).map(|j| self.w1[u * d + j] * x[j]).sum::<f64>();
            hidden[u] = a.max(0.0);
        }
        for c in 0..self.n_classes {
            out[c] = self.b2[c] + (0..h).map(|u| self.w2[c * h + u] * hidden[u]).sum::<f64>();
        }
        let mx = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - mx).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    pub fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.scale[j])
            .collect();
        let mut hidden = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_classes];
        self.forward(&xs, &mut hidden, &mut out);
        out
    }

    pub fn n_features(&self) -> usize {
        self.n_in
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}
