//! Causality-aware local surrogate explanations for tabular classifiers.
//!
//! The pipeline discovers a causal DAG over the features with an
//! additive-noise-model procedure, fits root-variable distributions and
//! dependent-variable regressors on that DAG, samples neighborhoods that
//! respect it, and explains a black-box prediction with a kernel-weighted
//! K-Lasso surrogate. A plain random-perturbation sampler is provided as the
//! baseline, together with fidelity, plausibility and stability metrics.

// `!(x > 0.0)` is used on purpose to reject NaN together with non-positive
// values, and index loops read better in the dense numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod causal;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gencda;
pub mod kernel;
pub mod ks;
pub mod models;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
