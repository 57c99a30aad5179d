//! CSV and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use geosmc::smc::PopulationDiagnostics;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{csv_err, io_err, CliResult};

pub const DIAGNOSTICS_HEADER: [&str; 6] = ["population", "phi", "ess", "acceptance_rate", "resampled", "jitter_events"];

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(io_err(path))
}

pub fn write_diagnostics(path: &Path, diagnostics: &[PopulationDiagnostics]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(DIAGNOSTICS_HEADER).map_err(csv_err(path))?;
    for d in diagnostics {
        w.write_record([
            d.population.to_string(),
            d.phi.to_string(),
            d.ess.to_string(),
            d.acceptance_rate.to_string(),
            d.resampled.to_string(),
            d.jitter_events.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// Rows of `population, particle_index, weight, <params...>`.
pub fn write_particles<'a>(
    path: &Path,
    params: &[&str],
    populations: impl IntoIterator<Item = (usize, &'a [DVector<f64>], &'a [f64])>,
) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["population", "particle_index", "weight"];
    header.extend_from_slice(params);
    w.write_record(&header).map_err(csv_err(path))?;
    for (pop, xs, ws) in populations {
        for (i, (x, wt)) in xs.iter().zip(ws).enumerate() {
            let mut row = vec![pop.to_string(), i.to_string(), wt.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err(path))?;
        }
    }
    finish(w, path)
}

/// Generic table with a header row.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    finish(w, path)
}

/// Pretty JSON, written to a temporary file and renamed into place.
pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n").map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEntry {
    pub index: usize,
    pub seed: u64,
    pub files: Vec<PathBuf>,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub replicates: Vec<ReplicateEntry>,
}

/// The manifest on disk, rewritten whenever a replicate completes.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: Mutex<RunManifest>,
}

impl ManifestWriter {
    pub fn create(path: PathBuf, manifest: RunManifest) -> CliResult<Self> {
        write_json(&path, &manifest)?;
        Ok(Self { path, manifest: Mutex::new(manifest) })
    }

    pub fn complete(&self, index: usize) -> CliResult<()> {
        let mut m = self.manifest.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(r) = m.replicates.iter_mut().find(|r| r.index == index) {
            r.completed = true;
        }
        write_json(&self.path, &*m)
    }

    pub fn into_inner(self) -> RunManifest {
        self.manifest.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}
