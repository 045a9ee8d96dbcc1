//! Best-of-K metrics and complexity accounting.

mod complexity;
mod metrics;

pub use complexity::{complexity_report, probe_window, ComplexityReport, REFERENCE_FLOPS_M, REFERENCE_PARAMS_M};
pub use metrics::{ade_fde, evaluate, window_errors, AdeFde, MetricsReport, SceneMetrics};
