//! Fidelity, plausibility and stability metrics for local explanations.

mod detection;
mod fidelity;
mod neighbors;
mod plausibility;
mod stability;
mod statistical;

pub use detection::{
    detection_metric, fit_linear_svm, fit_logistic, roc_auc, Detection, DetectionParams,
};
pub use fidelity::{r2_score, R2};
pub use plausibility::{amd, aos, aos_normalized, OutlierCounts, OutlierDetectors, OutlierParams};
pub use stability::{lle_stability, Lle, StabilityConfig};
pub use statistical::{
    asm, kl_score, ks_score, statistical_metrics, Gmm, GmmBank, GmmParams, StatisticalMetrics,
    KL_BINS,
};
