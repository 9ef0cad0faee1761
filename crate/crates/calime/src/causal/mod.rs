//! Causal structure learning from observational data.

mod anm;
mod graph;
mod hsic;
mod resit;

pub use anm::{
    anm_direction_score, regression_residuals, residual_independence, AnmScore, DETERMINISTIC_RATIO,
};
pub use graph::CausalGraph;
pub use hsic::{hsic_permutation_test, hsic_test, hsic_test_multi, HsicResult, MIN_HSIC_SAMPLES};
pub use resit::{discover, DiscoveryParams};
