//! Experiment runner for the geosmc sampler: configuration, orchestration of
//! replicates and CSV/JSON/SVG artifacts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::{resolve, ExperimentName, ExperimentSpec, Overrides};
pub use error::{CliError, CliResult};
pub use experiments::{run_experiment, RunRecord};
pub use output::RunManifest;

/// Read a JSON config document from disk.
pub fn read_config(path: &std::path::Path) -> CliResult<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}
