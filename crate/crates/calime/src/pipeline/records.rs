use serde::{Deserialize, Serialize};

use crate::explain::Mode;

/// One row of `metrics.csv`: every metric of one explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub black_box: String,
    pub mode: Mode,
    pub k: usize,
    pub instance_id: usize,
    pub class: usize,
    pub n_samples: usize,
    pub r2: f64,
    pub r2_degenerate: bool,
    pub amd: f64,
    pub lof_count: usize,
    pub abod_count: usize,
    pub iforest_count: usize,
    pub aos: f64,
    pub aos_normalized: f64,
    pub gm_loglik: f64,
    pub ks_score: f64,
    pub kl_score: f64,
    pub asm: f64,
    pub logistic_auc: f64,
    pub svm_auc: f64,
    pub adm: f64,
    pub adm_complement: f64,
    pub lle_mean: f64,
    pub lle_min: f64,
    pub lle_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySweepRow {
    pub dataset: String,
    pub black_box: String,
    pub mode: Mode,
    pub k: usize,
    pub n_instances: usize,
    pub r2_mean: f64,
    pub r2_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweepRow {
    pub dataset: String,
    pub black_box: String,
    pub mode: Mode,
    pub k: usize,
    pub n_instances: usize,
    pub lle_mean: f64,
    pub lle_std: f64,
    pub lle_min_mean: f64,
    pub lle_max_mean: f64,
}

/// Per-instance plausibility values for box plots (independent of `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityRow {
    pub dataset: String,
    pub black_box: String,
    pub mode: Mode,
    pub instance_id: usize,
    pub amd: f64,
    pub aos: f64,
    pub aos_normalized: f64,
    pub asm: f64,
    pub adm: f64,
}

/// Summary comparison, one row per mode at the largest configured `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub black_box: String,
    pub mode: Mode,
    pub k: usize,
    pub n_instances: usize,
    #[serde(rename = "AMD")]
    pub amd: f64,
    /// Mean over instances of the per-instance mean outlier count.
    #[serde(rename = "AOS")]
    pub aos: f64,
    /// Sum over instances of the per-instance mean outlier count.
    #[serde(rename = "AOS_sum")]
    pub aos_sum: f64,
    #[serde(rename = "AOS_normalized")]
    pub aos_normalized: f64,
    #[serde(rename = "ASM")]
    pub asm: f64,
    #[serde(rename = "ADM")]
    pub adm: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "LLE")]
    pub lle: f64,
}

/// A per-instance failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub instance_id: usize,
    pub mode: Mode,
    pub message: String,
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

/// Fixed-width text rendering of the summary table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<16} {:<14} {:<7} {:>3} {:>8} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
        "dataset", "black_box", "mode", "k", "AMD", "AOS", "ASM", "ADM", "R2", "LLE"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:<14} {:<7} {:>3} {:>8.3} {:>10.1} {:>8.3} {:>8.3} {:>8.3} {:>8.3}\n",
            r.dataset,
            r.black_box,
            r.mode.to_string(),
            r.k,
            r.amd,
            r.aos,
            r.asm,
            r.adm,
            r.r2,
            r.lle
        ));
    }
    s
}
