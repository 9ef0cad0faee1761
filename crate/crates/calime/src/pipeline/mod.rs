//! End-to-end runs: configuration, cached stages and output files.

mod config;
mod records;
mod run;

pub use config::{MetricParams, RunConfig};
pub use records::{
    render_summary, Failure, FidelitySweepRow, MetricsRecord, PlausibilityRow, StabilitySweepRow,
    SummaryRow,
};
pub use run::*;
