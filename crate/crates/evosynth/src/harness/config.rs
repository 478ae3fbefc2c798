//! Config and records files: versioned JSON wrappers around
//! [`ExperimentConfig`] and [`GenerationRecord`].
//!
//! The experiment manifest written after a run is itself a valid config
//! file, so a finished experiment can be reproduced by feeding its
//! manifest straight back in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{stage_err, ExperimentConfig, GenerationRecord, HarnessError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    version: u32,
    #[serde(flatten)]
    config: ExperimentConfig,
}

/// Where the four MNIST IDX files live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DataPaths {
    /// Conventional MNIST file names under one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, HarnessError> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| stage_err("config", format!("{}: {e}", path.display())))?;
    let file: ConfigFile = serde_json::from_slice(&bytes)
        .map_err(|e| stage_err("config", format!("{}: {e}", path.display())))?;
    if file.version != CONFIG_VERSION {
        return Err(stage_err(
            "config",
            format!(
                "{}: unsupported config version {} (supported: {CONFIG_VERSION})",
                path.display(),
                file.version
            ),
        ));
    }
    file.config.check()?;
    Ok(file.config)
}

pub fn save_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = ConfigFile {
        version: CONFIG_VERSION,
        config: cfg.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| stage_err("config", format!("encoding config: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| stage_err("config", format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct RecordsFile {
    version: u32,
    config: ExperimentConfig,
    records: Vec<GenerationRecord>,
}

pub fn save_records(
    cfg: &ExperimentConfig,
    records: &[GenerationRecord],
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = RecordsFile {
        version: CONFIG_VERSION,
        config: cfg.clone(),
        records: records.to_vec(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| stage_err("emit-reports", format!("encoding records: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| stage_err("emit-reports", format!("{}: {e}", path.display())))
}

pub fn load_records(
    path: impl AsRef<Path>,
) -> Result<(ExperimentConfig, Vec<GenerationRecord>), HarnessError> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| stage_err("report", format!("{}: {e}", path.display())))?;
    let file: RecordsFile = serde_json::from_slice(&bytes)
        .map_err(|e| stage_err("report", format!("{}: {e}", path.display())))?;
    if file.version != CONFIG_VERSION {
        return Err(stage_err(
            "report",
            format!(
                "{}: unsupported records version {} (supported: {CONFIG_VERSION})",
                path.display(),
                file.version
            ),
        ));
    }
    Ok((file.config, file.records))
}
