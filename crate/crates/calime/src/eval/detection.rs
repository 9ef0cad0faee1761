//! Real-versus-synthetic discrimination with linear classifiers.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, Matrix};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    pub folds: usize,
    /// L2 penalty of the logistic model.
    pub logistic_l2: f64,
    pub svm_c: f64,
    pub svm_epochs: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            folds: 3,
            logistic_l2: 1e-4,
            svm_c: 1.0,
            svm_epochs: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub logistic_auc: f64,
    pub svm_auc: f64,
    /// Mean of the two AUCs; lower means harder to tell apart.
    pub adm: f64,
    /// `1 - adm`.
    pub adm_complement: f64,
}

/// Area under the ROC curve for `scores` against boolean `labels`, with
/// tied scores counted as half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            if labels[t] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// L2-regularized logistic regression by Newton-Raphson (IRLS). The
/// intercept, stored last, is not penalized.
pub fn fit_logistic(x: &Matrix, y: &[bool], l2: f64) -> DVector<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let xa = x.clone().insert_column(d, 1.0);
    let mut beta = DVector::zeros(d + 1);
    for _ in 0..50 {
        let eta = &xa * &beta;
        let p: Vec<f64> = eta.iter().map(|&t| sigmoid(t)).collect();
        let mut grad = DVector::zeros(d + 1);
        let mut hess = Matrix::zeros(d + 1, d + 1);
        for i in 0..n {
            let r = p[i] - if y[i] { 1.0 } else { 0.0 };
            let w = (p[i] * (1.0 - p[i])).max(1e-12);
            let row = xa.row(i);
            for a in 0..=d {
                grad[a] += r * row[a];
                for b in 0..=a {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..=d {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for a in 0..d {
            grad[a] += l2 * n as f64 * beta[a];
            hess[(a, a)] += l2 * n as f64;
        }
        hess[(d, d)] += 1e-10;
        let Some(ch) = Cholesky::<f64, Dyn>::new(hess) else {
            break;
        };
        let step = ch.solve(&grad);
        beta -= &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    beta
}

/// Linear SVM (hinge loss, bias as an extra constant feature) by dual
/// coordinate descent. Returns weights with the bias last.
pub fn fit_linear_svm(x: &Matrix, y: &[bool], c: f64, epochs: usize, seed: u64) -> DVector<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let xa = x.clone().insert_column(d, 1.0);
    let yv: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = (0..n).map(|i| xa.row(i).norm_squared()).collect();
    let mut alpha = vec![0.0; n];
    let mut w = DVector::zeros(d + 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &order {
            if qii[i] == 0.0 {
                continue;
            }
            let row = xa.row(i);
            let g = yv[i] * row.dot(&w.transpose()) - 1.0;
            let new = (alpha[i] - g / qii[i]).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                for a in 0..=d {
                    w[a] += delta * yv[i] * row[a];
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-8 {
            break;
        }
    }
    w
}

fn scores(x: &Matrix, w: &DVector<f64>) -> Vec<f64> {
    let d = x.ncols();
    (0..x.nrows())
        .map(|i| {
            x.row(i)
                .iter()
                .zip(w.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + w[d]
        })
        .collect()
}

/// Cross-validated AUCs of logistic and linear-SVM discriminators trained to
/// separate `synthetic` (positive) from `reference` rows.
pub fn detection_metric(
    reference: &Matrix,
    synthetic: &Matrix,
    params: &DetectionParams,
    seed: u64,
) -> Result<Detection> {
    if reference.ncols() != synthetic.ncols() {
        return Err(Error::DimensionMismatch {
            expected: reference.ncols(),
            found: synthetic.ncols(),
        });
    }
    let folds = params.folds.max(2);
    if reference.nrows() < folds || synthetic.nrows() < folds {
        return Err(Error::TooFewSamples {
            needed: folds,
            got: reference.nrows().min(synthetic.nrows()),
        });
    }
    let n = reference.nrows() + synthetic.nrows();
    let mut all = Matrix::zeros(n, reference.ncols());
    all.rows_mut(0, reference.nrows()).copy_from(reference);
    all.rows_mut(reference.nrows(), synthetic.nrows())
        .copy_from(synthetic);
    let labels: Vec<bool> = (0..n).map(|i| i >= reference.nrows()).collect();

    // Stratified fold assignment after a seeded shuffle.
    let mut rng = rng_from_seed(seed);
    let mut fold = vec![0usize; n];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = r % folds;
        }
    }

    let mut aucs = [0.0; 2];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xtr = all.select_rows(&train);
        let stats = ColumnStats::from_matrix(&xtr)?;
        let xtr = stats.standardize(&xtr);
        let xte = stats.standardize(&all.select_rows(&test));
        let ytr: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let yte: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        let lw = fit_logistic(&xtr, &ytr, params.logistic_l2);
        let sw = fit_linear_svm(&xtr, &ytr, params.svm_c, params.svm_epochs, rng.random());
        aucs[0] += roc_auc(&scores(&xte, &lw), &yte)?;
        aucs[1] += roc_auc(&scores(&xte, &sw), &yte)?;
    }
    let logistic_auc = aucs[0] / folds as f64;
    let svm_auc = aucs[1] / folds as f64;
    let adm = (logistic_auc + svm_auc) / 2.0;
    Ok(Detection {
        logistic_auc,
        svm_auc,
        adm,
        adm_complement: 1.0 - adm,
    })
}
