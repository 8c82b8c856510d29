//! Metrics, the ablation grid and its aggregation.

mod aggregate;
mod grid;
mod metrics;

pub use aggregate::{aggregate, mean_and_sample_variance, results_csv, CellSummary, ModeGap, ModeSummary, Summary};
pub use grid::{run_ablation_grid, CellOutcome, GridConfig, RunRecord};
pub use metrics::{compute_metrics, Metrics};
