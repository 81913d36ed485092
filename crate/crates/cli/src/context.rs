//! Shared run plumbing: data loading with checksums, output-directory
//! resolution and the replayable run configuration written before any
//! work starts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stackids::data::{
    load_csv_reader, LabelMode, PipelineConfig, RawDataset, Schema,
};
use stackids::models::ModelConfig;
use stackids::{Error, Result};

use crate::args::DataArgs;

/// Environment variable naming the default root for run directories.
pub const OUT_ROOT_ENV: &str = "STACKIDS_OUT";

/// Serializable description of where the records came from.
#[derive(Debug, Clone, Serialize)]
pub struct DataSource {
    pub fixture: bool,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
}

pub struct LoadedData {
    pub dataset: RawDataset,
    pub source: DataSource,
    /// Hex digest of the raw CSV bytes.
    pub sha256: String,
    /// Short name for run-directory labels.
    pub tag: String,
}

pub fn load_data(args: &DataArgs) -> Result<LoadedData> {
    let source = DataSource {
        fixture: args.fixture,
        data: args.data.clone(),
        schema: args.schema.clone(),
    };
    if args.fixture {
        let text = stackids::data::fixture_csv();
        return Ok(LoadedData {
            dataset: stackids::data::fixture()?,
            source,
            sha256: hex_sha256(text.as_bytes()),
            tag: "fixture".into(),
        });
    }
    let Some(path) = &args.data else {
        return Err(Error::Usage(
            "no dataset given: pass --data <csv> or --fixture".into(),
        ));
    };
    let schema = match &args.schema {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Validation(format!("cannot read schema {}: {e}", p.display()))
            })?;
            Schema::from_json(&text)?
        }
        None => Schema::unsw_nb15(),
    };
    let bytes = fs::read(path).map_err(|e| {
        Error::Validation(format!("cannot read dataset {}: {e}", path.display()))
    })?;
    let dataset = load_csv_reader(bytes.as_slice(), &schema)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    Ok(LoadedData {
        dataset,
        source,
        sha256: hex_sha256(&bytes),
        tag,
    })
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Everything needed to replay a run bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub source: DataSource,
    pub label_mode: LabelMode,
    pub test_fraction: f64,
    pub stratified: bool,
    pub balance: bool,
    pub seed: u64,
    pub models: Vec<ModelConfig>,
    pub dataset_sha256: String,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            label_mode: self.label_mode,
            test_fraction: self.test_fraction,
            stratified: self.stratified,
            balance: self.balance,
        }
    }
}

/// Chooses the run directory: an explicit --out wins, otherwise a
/// deterministic name under the STACKIDS_OUT root (default `runs/`).
pub fn resolve_run_dir(out: &Option<PathBuf>, command: &str, tag: &str, seed: u64) -> PathBuf {
    match out {
        Some(dir) => dir.clone(),
        None => {
            let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".into());
            Path::new(&root).join(format!("{command}-{tag}-seed{seed}"))
        }
    }
}

/// Creates the run directory and records the resolved configuration
/// and dataset digest before any training or evaluation runs.
pub fn write_run_setup(dir: &Path, rc: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("run_config.json"), rc)?;
    fs::write(dir.join("dataset.sha256"), format!("{}\n", rc.dataset_sha256))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
