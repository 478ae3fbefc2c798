//! Report files for a finished experiment.
//!
//! Three files with stable column order and 6-decimal reals:
//! `overlap_by_generation.csv` (one row per synthesized generation),
//! `accuracy_vs_storage.csv` (one row per network, ancestor included), and
//! `experiment_manifest.json` (the exact config, reusable as input). The
//! records themselves go to `generation_records.json` so reports can be
//! regenerated without re-running anything.

use std::fmt::Write as _;
use std::path::Path;

use super::{config, stage_err, ExperimentConfig, GenerationRecord, HarnessError};

pub fn overlap_csv(records: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,average_overlap\n");
    for record in records.iter().filter(|r| r.generation > 0) {
        match record.average_overlap {
            Some(avg) => {
                let _ = writeln!(out, "{},{avg:.6}", record.generation);
            }
            None => {
                let _ = writeln!(out, "{},nan", record.generation);
            }
        }
    }
    out
}

pub fn accuracy_csv(records: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,network_id,storage_bytes,accuracy,degenerate\n");
    for record in records {
        for net in &record.networks {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{}",
                record.generation, net.network_id, net.storage_bytes, net.accuracy, net.degenerate
            );
        }
    }
    out
}

/// Writes the three report files plus the records dump into `dir`.
pub fn emit_reports(
    cfg: &ExperimentConfig,
    records: &[GenerationRecord],
    dir: &Path,
) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(stage_err("emit-reports", "no records to report"));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| stage_err("emit-reports", format!("{}: {e}", dir.display())))?;
    let write = |name: &str, contents: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| stage_err("emit-reports", format!("{}: {e}", path.display())))
    };
    write("overlap_by_generation.csv", overlap_csv(records))?;
    write("accuracy_vs_storage.csv", accuracy_csv(records))?;
    config::save_config(cfg, dir.join("experiment_manifest.json"))?;
    config::save_records(cfg, records, dir.join("generation_records.json"))?;
    Ok(())
}
