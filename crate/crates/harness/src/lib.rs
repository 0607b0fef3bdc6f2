//! Batch experiment engine for structure-learning sweeps: seeded trial
//! batches over a β grid, success-probability aggregation, and
//! byte-reproducible CSV/SVG/metadata outputs.

use thiserror::Error;

pub mod config;
pub mod experiment;
pub mod kvfile;
pub mod plot;

pub use config::{ExperimentConfig, L1Constant, Method, Topology};
pub use experiment::{
    calibrate_greedy_constant, csv_text, run_sweep, run_trial, PointSummary, SweepResult,
    TrialRecord, CSV_HEADER,
};
pub use plot::{render_plot, PlotSeries};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("plot error: {0}")]
    Plot(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Formats a float with six significant digits, rounding half to even, and
/// prints it without trailing zeros. All floats in the CSV go through this
/// so byte output is stable across platforms.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - exponent);
    let rounded = (x * scale).round_ties_even() / scale;
    format!("{rounded}")
}
