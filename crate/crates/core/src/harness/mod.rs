//! Experiment configuration, runners and report output.

mod acceptance;
mod config;
mod experiments;
mod oracle;
mod report;

pub use acceptance::{acceptance_help, Preset, ACCEPTANCE};
pub use config::{
    parse_config, parse_config_file, BoundsConfig, DensityConfig, Experiment, GradientConfig, GridConfig, LionsConfig,
    ModelConfig, RunConfig, SimulateConfig, TimeConfig,
};
pub use experiments::{run_experiment, run_named};
pub use report::{write_report, Check, ExperimentReport, Table};

/// Formats a float with 17 significant digits so CSV output round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
