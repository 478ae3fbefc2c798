//! End-to-end experiment orchestration.
//!
//! Protocol: train one dense ancestor (generation 0), then for each
//! generation fill every population slot by sampling parents from the
//! previous generation, synthesizing an offspring, training it, and
//! measuring accuracy, storage, and population overlap. Everything is a
//! pure function of the experiment config: per-slot seeds derive from the
//! master seed, so slots can run on any number of threads and reports
//! reproduce byte for byte.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    ancestor_architecture, serialize, storage_size, validate, NetworkArchitecture, Validity,
};
use crate::similarity::{overlap_matrix, OverlapReport};
use crate::synthesis::{synthesize_offspring, EnvironmentalFactors, MatingPolicy};
use crate::trainer::{evaluate, load_mnist_idx, train, Dataset, TrainConfig};

mod config;
mod report;
mod seeds;

pub use config::{load_config, load_records, save_config, save_records, DataPaths, CONFIG_VERSION};
pub use report::emit_reports;

/// A harness failure, always naming the stage that aborted.
#[derive(Debug, Error)]
#[error("stage {stage}: {detail}")]
pub struct HarnessError {
    pub stage: &'static str,
    pub detail: String,
}

fn stage_err(stage: &'static str, detail: impl std::fmt::Display) -> HarnessError {
    HarnessError {
        stage,
        detail: detail.to_string(),
    }
}

/// Full description of one experiment. The config file on disk is this
/// structure plus a format version; see [`load_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layer_widths: Vec<usize>,
    pub population_size: usize,
    pub generations: usize,
    pub policy: MatingPolicy,
    pub env: EnvironmentalFactors,
    pub train_cfg: TrainConfig,
    pub master_seed: u64,
    pub data: DataPaths,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), HarnessError> {
        let fail = |detail: String| Err(stage_err("config", detail));
        if self.layer_widths.len() < 3 || self.layer_widths.contains(&0) {
            return fail(format!("invalid layer widths {:?}", self.layer_widths));
        }
        if self.generations == 0 {
            return fail("generations must be at least 1".into());
        }
        if self.population_size < self.policy.m {
            return fail(format!(
                "population_size {} is smaller than parent count m = {}",
                self.population_size, self.policy.m
            ));
        }
        self.policy.check().map_err(|e| stage_err("config", e))?;
        self.env.check().map_err(|e| stage_err("config", e))?;
        self.train_cfg.check().map_err(|e| stage_err("config", e))?;
        Ok(())
    }
}

/// Per-network measurements within one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub network_id: String,
    pub parent_ids: Vec<String>,
    pub seed: u64,
    pub accuracy: f64,
    pub storage_bytes: usize,
    pub live_clusters: usize,
    pub degenerate: bool,
    pub tags: Vec<(usize, usize)>,
}

/// One generation's records plus its average overlap (absent for the
/// single-network ancestor generation, or when fewer than two networks
/// still have clusters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub networks: Vec<NetworkRecord>,
    pub average_overlap: Option<f64>,
}

/// Uniform sample of `m` distinct parent ids from the previous generation,
/// in sampled order. Deterministic per seed.
pub fn select_parents(
    previous: &GenerationRecord,
    m: usize,
    seed: u64,
) -> Result<Vec<String>, HarnessError> {
    use rand::{Rng, SeedableRng};
    let n = previous.networks.len();
    if m > n {
        return Err(stage_err(
            "select-parents",
            format!("cannot draw {m} parents from a population of {n}"),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    Ok(indices[..m]
        .iter()
        .map(|&i| previous.networks[i].network_id.clone())
        .collect())
}

/// A loaded experiment: config plus parsed datasets.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    train_data: Dataset,
    test_data: Dataset,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.check()?;
        let train_data = load_mnist_idx(&cfg.data.train_images, &cfg.data.train_labels)
            .map_err(|e| stage_err("load-mnist", e))?;
        let test_data = load_mnist_idx(&cfg.data.test_images, &cfg.data.test_labels)
            .map_err(|e| stage_err("load-mnist", e))?;
        if train_data.width() != cfg.layer_widths[0] {
            return Err(stage_err(
                "load-mnist",
                format!(
                    "dataset width {} does not match input width {}",
                    train_data.width(),
                    cfg.layer_widths[0]
                ),
            ));
        }
        Ok(Self {
            cfg,
            train_data,
            test_data,
        })
    }

    /// Builds and trains the generation-0 ancestor, returning it with its
    /// one-network record.
    pub fn train_ancestor(&self) -> Result<(NetworkArchitecture, GenerationRecord), HarnessError> {
        let init_seed = seeds::ancestor_init(self.cfg.master_seed);
        let net = ancestor_architecture(&self.cfg.layer_widths, init_seed)
            .map_err(|e| stage_err("train-ancestor", e))?;
        let train_cfg = TrainConfig {
            seed: seeds::ancestor_train(self.cfg.master_seed),
            ..self.cfg.train_cfg
        };
        let outcome = train(&net, &self.train_data, &train_cfg)
            .map_err(|e| stage_err("train-ancestor", e))?;
        let record = self
            .measure(&outcome.network, Vec::new(), init_seed)
            .map_err(|e| stage_err("train-ancestor", e))?;
        Ok((
            outcome.network,
            GenerationRecord {
                generation: 0,
                networks: vec![record],
                average_overlap: None,
            },
        ))
    }

    /// Synthesizes, trains, and measures one full generation from the
    /// previous population. Slots run in parallel; results are assembled in
    /// slot order so the outcome is independent of scheduling.
    pub fn run_generation(
        &self,
        previous: &[NetworkArchitecture],
        previous_record: &GenerationRecord,
        generation: usize,
    ) -> Result<(Vec<NetworkArchitecture>, GenerationRecord), HarnessError> {
        let slots: Vec<usize> = (0..self.cfg.population_size).collect();
        let results: Result<Vec<(NetworkArchitecture, NetworkRecord)>, HarnessError> = slots
            .par_iter()
            .map(|&slot| self.run_slot(previous, previous_record, generation, slot))
            .collect();
        let results = results?;

        let (population, networks): (Vec<_>, Vec<_>) = results.into_iter().unzip();

        // Networks with no clusters at all have undefined overlap; leave
        // them out of the generation average.
        for net in population.iter().filter(|n| n.cluster_count() == 0) {
            eprintln!(
                "warning: generation {generation}: {} has no clusters, excluded from overlap average",
                net.network_id()
            );
        }
        let average_overlap = self
            .generation_matrix(&population)?
            .map(|r| r.generation_average);
        Ok((
            population,
            GenerationRecord {
                generation,
                networks,
                average_overlap,
            },
        ))
    }

    fn run_slot(
        &self,
        previous: &[NetworkArchitecture],
        previous_record: &GenerationRecord,
        generation: usize,
        slot: usize,
    ) -> Result<(NetworkArchitecture, NetworkRecord), HarnessError> {
        let m = self.cfg.policy.m;
        let ctx = |e: &dyn std::fmt::Display| format!("generation {generation} slot {slot}: {e}");

        // The first synthesized generation descends from the lone ancestor:
        // every parent slot holds it, which collapses to single-parent
        // synthesis for that step.
        let (parents, parent_ids): (Vec<&NetworkArchitecture>, Vec<String>) = if previous.len() == 1
        {
            (
                vec![&previous[0]; m],
                vec![previous[0].network_id().to_string(); m],
            )
        } else {
            let ids = select_parents(
                previous_record,
                m,
                seeds::select(self.cfg.master_seed, generation, slot),
            )?;
            let parents = ids
                .iter()
                .map(|id| {
                    previous
                        .iter()
                        .find(|n| n.network_id() == id)
                        .ok_or_else(|| {
                            stage_err("select-parents", ctx(&format!("unknown parent {id}")))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            (parents, ids)
        };

        let synth_seed = seeds::synthesize(self.cfg.master_seed, generation, slot);
        let offspring = synthesize_offspring(
            &parents,
            &self.cfg.policy,
            &self.cfg.env,
            generation as u32,
            synth_seed,
        )
        .map_err(|e| stage_err("synthesize", ctx(&e)))?
        .with_network_id(format!("g{generation}n{slot:02}"));

        let train_cfg = TrainConfig {
            seed: seeds::train(self.cfg.master_seed, generation, slot),
            ..self.cfg.train_cfg
        };
        let outcome = train(&offspring, &self.train_data, &train_cfg)
            .map_err(|e| stage_err("train", ctx(&e)))?;
        let record = self
            .measure(&outcome.network, parent_ids, synth_seed)
            .map_err(|e| stage_err("evaluate", ctx(&e)))?;
        Ok((outcome.network, record))
    }

    fn measure(
        &self,
        net: &NetworkArchitecture,
        parent_ids: Vec<String>,
        seed: u64,
    ) -> Result<NetworkRecord, crate::trainer::TrainerError> {
        let result = evaluate(net, &self.test_data)?;
        let storage = storage_size(net);
        Ok(NetworkRecord {
            network_id: net.network_id().to_string(),
            parent_ids,
            seed,
            accuracy: result.accuracy,
            storage_bytes: storage.bytes,
            live_clusters: storage.live_clusters,
            degenerate: validate(net) == Validity::Degenerate,
            tags: net
                .tag_set()
                .into_iter()
                .map(|t| (t.layer, t.ancestor_index))
                .collect(),
        })
    }

    /// Runs the whole protocol and writes every report file into the
    /// output directory. Returns the records, ancestor first.
    pub fn run(&self) -> Result<Vec<GenerationRecord>, HarnessError> {
        let out = self.cfg.output_dir.clone();
        std::fs::create_dir_all(&out)
            .map_err(|e| stage_err("emit-reports", format!("{}: {e}", out.display())))?;

        let (ancestor, ancestor_record) = self.train_ancestor()?;
        eprintln!(
            "generation 0: ancestor accuracy {:.4}, {} bytes",
            ancestor_record.networks[0].accuracy, ancestor_record.networks[0].storage_bytes
        );
        write_network(&out, 0, &ancestor)?;

        let mut records = vec![ancestor_record];
        let mut population = vec![ancestor];
        for generation in 1..=self.cfg.generations {
            let (next, record) =
                self.run_generation(&population, records.last().unwrap(), generation)?;
            let mean_bytes = record
                .networks
                .iter()
                .map(|n| n.storage_bytes as f64)
                .sum::<f64>()
                / record.networks.len() as f64;
            let mean_acc = record.networks.iter().map(|n| n.accuracy).sum::<f64>()
                / record.networks.len() as f64;
            eprintln!(
                "generation {generation}: mean accuracy {mean_acc:.4}, mean storage {mean_bytes:.0} bytes, overlap {}",
                record
                    .average_overlap
                    .map_or("n/a".to_string(), |o| format!("{o:.4}")),
            );
            for net in &next {
                write_network(&out, generation, net)?;
            }
            if let Some(matrix) = self.generation_matrix(&next)? {
                let path = out.join(format!("overlap_matrix_gen_{generation}.csv"));
                std::fs::write(&path, matrix.to_csv())
                    .map_err(|e| stage_err("emit-reports", format!("{}: {e}", path.display())))?;
            }
            records.push(record);
            population = next;
        }

        emit_reports(&self.cfg, &records, &out)?;
        Ok(records)
    }

    fn generation_matrix(
        &self,
        population: &[NetworkArchitecture],
    ) -> Result<Option<OverlapReport>, HarnessError> {
        let with_tags: Vec<&NetworkArchitecture> = population
            .iter()
            .filter(|n| n.cluster_count() > 0)
            .collect();
        if with_tags.len() < 2 {
            return Ok(None);
        }
        overlap_matrix(&with_tags)
            .map(Some)
            .map_err(|e| stage_err("overlap", e))
    }
}

fn write_network(
    out: &Path,
    generation: usize,
    net: &NetworkArchitecture,
) -> Result<(), HarnessError> {
    let dir = out.join("networks").join(format!("g{generation}"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| stage_err("write-network", format!("{}: {e}", dir.display())))?;
    let path = dir.join(format!("{}.json", net.network_id()));
    let bytes = serialize(net).map_err(|e| stage_err("write-network", e))?;
    std::fs::write(&path, bytes)
        .map_err(|e| stage_err("write-network", format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Loads the datasets, runs the full experiment described by `cfg`, and
/// writes all report files. The one-call entry point behind the CLI.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<Vec<GenerationRecord>, HarnessError> {
    Experiment::new(cfg)?.run()
}

/// Checks the cross-generation bookkeeping invariants on a finished run:
/// every parent id must exist in the preceding generation and the ancestor
/// generation must be parentless.
pub fn check_ancestry(records: &[GenerationRecord]) -> Result<(), HarnessError> {
    let mut previous_ids: BTreeSet<&str> = BTreeSet::new();
    for (idx, record) in records.iter().enumerate() {
        let ids: BTreeSet<&str> = record
            .networks
            .iter()
            .map(|n| n.network_id.as_str())
            .collect();
        for net in &record.networks {
            if idx == 0 && !net.parent_ids.is_empty() {
                return Err(stage_err(
                    "ancestry",
                    format!("generation 0 network {} has parents", net.network_id),
                ));
            }
            for parent in &net.parent_ids {
                if idx > 0 && !previous_ids.contains(parent.as_str()) {
                    return Err(stage_err(
                        "ancestry",
                        format!(
                            "generation {}: parent {parent} of {} not in generation {}",
                            record.generation,
                            net.network_id,
                            record.generation.saturating_sub(1)
                        ),
                    ));
                }
            }
        }
        previous_ids = ids;
    }
    Ok(())
}
