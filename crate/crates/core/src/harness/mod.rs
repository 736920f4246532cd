//! Experiment plumbing behind the `hkf` command line: configuration,
//! per-method evaluation and result reports.

mod config;
mod eval;
mod report;

pub use config::{parse_list, ExperimentConfig};
pub use eval::{evaluate, Artifact, Method, ALL_METHODS};
pub use report::{ComparisonTable, ReportRow, RunReport, REPORT_HEADER};
