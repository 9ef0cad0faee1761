//! Causality-respecting neighborhood generation.
//!
//! Roots of the discovered DAG get fitted marginal samplers, every other
//! node a regressor on its parents. A neighbor of `x` re-samples a random
//! subset of roots and propagates the change down the DAG; everything not
//! downstream of a re-sampled root keeps the value it has in `x`.

mod roots;
mod sampler;

pub use roots::{
    fit_root_column, fit_root_distributions, RootDistributions, RootFamily, RootFit,
    EMPIRICAL_FALLBACK_KS, MIN_ROOT_ROWS,
};
pub use sampler::{
    fit_regressors, generate_neighborhood, sample_neighbor, sample_neighbor_marked, GeneratorModel,
    NoiseMode, RegressorSet, SamplerConfig, CHUNK_ROWS,
};
