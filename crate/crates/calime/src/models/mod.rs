//! Black-box classifiers, nonparametric regressors and the K-Lasso solver.

mod external;
mod forest;
mod kernel_ridge;
mod lasso;
mod mlp;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub use external::ExternalBlackBox;
pub use forest::{DecisionTree, ForestParams, RandomForest};
pub use kernel_ridge::{fit_regressor, KernelRidge, RegressorParams, MIN_REGRESSION_ROWS};
pub use lasso::{
    fit_k_lasso, kkt_violation, lambda_max, objective, weighted_lasso, weighted_refit, LassoFit,
    PATH_LENGTH, PATH_RATIO,
};
pub use mlp::{Mlp, MlpParams};

/// Regressor used for discovery and for dependent-variable generation.
pub type Regressor = KernelRidge;

/// An opaque classifier observed only through its probabilities.
pub trait BlackBox: Send + Sync {
    fn n_features(&self) -> usize;

    fn n_classes(&self) -> usize;

    /// Row-stochastic `batch.nrows() × n_classes` matrix.
    fn predict_proba(&self, batch: &Matrix) -> Result<Matrix>;

    /// Arg-max of [`BlackBox::predict_proba`], lowest class on ties.
    fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(batch)?;
        Ok((0..p.nrows())
            .map(|i| {
                let row = p.row(i);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

pub(crate) fn check_width(expected: usize, batch: &Matrix) -> Result<()> {
    if batch.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: batch.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlackBoxKind {
    RandomForest,
    Mlp,
}

impl std::fmt::Display for BlackBoxKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlackBoxKind::RandomForest => "random_forest",
            BlackBoxKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for BlackBoxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" | "rf" => Ok(BlackBoxKind::RandomForest),
            "mlp" | "nn" => Ok(BlackBoxKind::Mlp),
            other => Err(Error::Config(format!("unknown black-box kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlackBoxParams {
    pub forest: ForestParams,
    pub mlp: MlpParams,
    /// Share of `X_b` held out to report accuracy before the final refit.
    pub holdout_fraction: f64,
}

impl Default for BlackBoxParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            mlp: MlpParams::default(),
            holdout_fraction: 0.2,
        }
    }
}

/// A fitted built-in classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum BuiltinModel {
    RandomForest(RandomForest),
    Mlp(Mlp),
}

impl BuiltinModel {
    fn fit(
        kind: BlackBoxKind,
        x: &Matrix,
        y: &[usize],
        l: usize,
        params: &BlackBoxParams,
        seed: u64,
    ) -> Result<Self> {
        Ok(match kind {
            BlackBoxKind::RandomForest => {
                BuiltinModel::RandomForest(RandomForest::fit(x, y, l, &params.forest, seed)?)
            }
            BlackBoxKind::Mlp => BuiltinModel::Mlp(Mlp::fit(x, y, l, &params.mlp, seed)?),
        })
    }

    fn proba_row(&self, row: &[f64]) -> Vec<f64> {
        match self {
            BuiltinModel::RandomForest(m) => m.proba_row(row),
            BuiltinModel::Mlp(m) => m.proba_row(row),
        }
    }
}

impl BlackBox for BuiltinModel {
    fn n_features(&self) -> usize {
        match self {
            BuiltinModel::RandomForest(m) => m.n_features(),
            BuiltinModel::Mlp(m) => m.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            BuiltinModel::RandomForest(m) => m.n_classes(),
            BuiltinModel::Mlp(m) => m.n_classes(),
        }
    }

    fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        check_width(self.n_features(), batch)?;
        let l = self.n_classes();
        let rows: Vec<Vec<f64>> = (0..batch.nrows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = batch.row(i).iter().copied().collect();
                self.proba_row(&row)
            })
            .collect();
        Ok(Matrix::from_fn(rows.len(), l, |i, c| rows[i][c]))
    }
}

/// A built-in model together with its held-out accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBlackBox {
    pub model: BuiltinModel,
    pub holdout_accuracy: f64,
}

/// Train a built-in black-box on `x_b`.
///
/// A seeded `holdout_fraction` of the rows is scored with a model fit on the
/// rest; the returned model is then refit on all of `x_b`.
pub fn train_black_box(
    kind: BlackBoxKind,
    x_b: &Dataset,
    params: &BlackBoxParams,
    seed: u64,
) -> Result<TrainedBlackBox> {
    let labels = x_b
        .labels()
        .ok_or_else(|| Error::InvalidInput("black-box training data has no labels".into()))?;
    let l = x_b.class_count();
    let n = x_b.n_rows();
    if n < l {
        return Err(Error::TooFewSamples { needed: l, got: n });
    }
    let present = labels
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if present < 2 {
        return Err(Error::Degenerate(
            "training data holds a single class".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, 0xB0)));
    let n_hold = ((params.holdout_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let holdout_accuracy = if n_hold > 0 {
        let (hold, fit) = order.split_at(n_hold);
        let xf = x_b.values().select_rows(fit);
        let yf: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
        let model = BuiltinModel::fit(kind, &xf, &yf, l, params, seed)?;
        let pred = model.predict(&x_b.values().select_rows(hold))?;
        hold.iter()
            .zip(&pred)
            .filter(|(&i, &p)| labels[i] == p)
            .count() as f64
            / n_hold as f64
    } else {
        f64::NAN
    };
    let model = BuiltinModel::fit(kind, x_b.values(), labels, l, params, seed)?;
    Ok(TrainedBlackBox {
        model,
        holdout_accuracy,
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    holdout_accuracy: f64,
    #[serde(flatten)]
    model: BuiltinModel,
}

/// Versioned JSON dump of a trained built-in model.
pub fn save_model(trained: &TrainedBlackBox, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        holdout_accuracy: trained.holdout_accuracy,
        model: trained.model.clone(),
    };
    fs::write(path, serde_json::to_vec(&file)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedBlackBox> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    Ok(TrainedBlackBox {
        model: file.model,
        holdout_accuracy: file.holdout_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize) -> Dataset {
        let values = Matrix::from_fn(n, 2, |i, j| {
            let c = (i % 2) as f64;
            c * 4.0 + ((i * (j + 3)) % 7) as f64 / 7.0
        });
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::new(
            vec!["a".into(), "b".into()],
            values,
            Some(labels),
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn forest_on_separable_blobs() {
        let t = train_black_box(
            BlackBoxKind::RandomForest,
            &blobs(100),
            &BlackBoxParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(t.holdout_accuracy, 1.0);
        let p = t
            .model
            .predict_proba(&Matrix::from_row_slice(2, 2, &[0.1, 0.1, 4.2, 0.3]))
            .unwrap();
        assert_eq!(
            t.model
                .predict(&Matrix::from_row_slice(2, 2, &[0.1, 0.1, 4.2, 0.3]))
                .unwrap(),
            vec![0, 1]
        );
        for i in 0..2 {
            assert!((p.row(i).sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn errors_on_bad_training_data() {
        let d = blobs(20);
        let unlabeled = Dataset::from_matrix(d.values().clone()).unwrap();
        assert!(train_black_box(
            BlackBoxKind::RandomForest,
            &unlabeled,
            &BlackBoxParams::default(),
            0
        )
        .is_err());
        let one_class = Dataset::new(
            d.columns().to_vec(),
            d.values().clone(),
            Some(vec![0; 20]),
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        assert!(matches!(
            train_black_box(BlackBoxKind::Mlp, &one_class, &BlackBoxParams::default(), 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn width_mismatch_and_empty_batch() {
        let t = train_black_box(
            BlackBoxKind::RandomForest,
            &blobs(40),
            &BlackBoxParams::default(),
            1,
        )
        .unwrap();
        assert!(matches!(
            t.model.predict_proba(&Matrix::zeros(3, 5)),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty = t.model.predict_proba(&Matrix::zeros(0, 2)).unwrap();
        assert_eq!(empty.shape(), (0, 2));
    }

    #[test]
    fn model_json_round_trip() {
        let t =
            train_black_box(BlackBoxKind::Mlp, &blobs(40), &BlackBoxParams::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&t, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "rf".parse::<BlackBoxKind>().unwrap(),
            BlackBoxKind::RandomForest
        );
        assert_eq!("mlp".parse::<BlackBoxKind>().unwrap(), BlackBoxKind::Mlp);
        assert!("svm".parse::<BlackBoxKind>().is_err());
    }
}
