//! On-disk layout of an experiment run.
//!
//! ```text
//! <dir>/config.txt        full configuration (every key)
//! <dir>/manifest.json     experiment name, seed and record keys
//! <dir>/records/<key>.csv one trajectory per job (plus .snapshots.csv)
//! <dir>/report.json       reduced report
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{reduce, Config, ExperimentKind, ExperimentOutcome, ExperimentReport, ExperimentSpec};
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub keys: Vec<String>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn persist(dir: impl AsRef<Path>, spec: &ExperimentSpec, outcome: &ExperimentOutcome) -> Result<()> {
    let dir = dir.as_ref();
    let records = dir.join("records");
    fs::create_dir_all(&records).map_err(|e| Error::io(&records, e))?;
    write(&dir.join("config.txt"), &spec.config.emit())?;
    let manifest = Manifest {
        experiment: spec.kind,
        seed: spec.seed,
        keys: outcome.records.keys().cloned().collect(),
    };
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    for (key, rec) in &outcome.records {
        rec.write_csv(records.join(format!("{key}.csv")))?;
    }
    write(&dir.join("report.json"), &serde_json::to_string_pretty(&outcome.report)?)
}

/// Recomputes the report of a persisted run from its records and
/// configuration, without integrating anything.
pub fn replay(dir: impl AsRef<Path>) -> Result<(ExperimentSpec, ExperimentReport)> {
    let dir = dir.as_ref();
    let config = Config::load(dir.join("config.txt"))?;
    let manifest: Manifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
    let spec = ExperimentSpec::from_config(config, manifest.seed)?;
    if spec.kind != manifest.experiment {
        return Err(Error::config("manifest.json", "experiment does not match config.txt"));
    }
    let mut records = BTreeMap::new();
    for key in &manifest.keys {
        records.insert(key.clone(), TrajectoryRecord::read_csv(dir.join("records").join(format!("{key}.csv")))?);
    }
    let report = reduce(&spec, &records)?;
    Ok((spec, report))
}

/// The report written by [`persist`].
pub fn stored_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(&read(&dir.as_ref().join("report.json"))?)?)
}
