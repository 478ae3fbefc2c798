use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use evosynth::arch::deserialize;
use evosynth::harness::{
    check_ancestry, emit_reports, load_config, load_records, run_experiment, save_config,
    Experiment, ExperimentConfig,
};
use evosynth::similarity::percent_overlap;
use evosynth::synthesis::Alignment;

#[derive(Parser)]
#[command(
    name = "evosynth",
    version,
    about = "Evolutionary synthesis of sparse neural networks with overlap analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense generation-0 ancestor and save it with its metrics.
    TrainAncestor {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full multi-generation experiment and write report CSVs.
    Evolve {
        #[command(flatten)]
        common: CommonArgs,
        /// Cluster alignment during mating.
        #[arg(long, value_parser = parse_alignment)]
        alignment: Option<Alignment>,
        /// Number of synthesized generations.
        #[arg(long)]
        generations: Option<usize>,
        /// Networks per generation.
        #[arg(long)]
        population: Option<usize>,
        /// Parents per offspring (m).
        #[arg(long)]
        parents: Option<usize>,
        /// Cluster survival budget in percent, (0, 100].
        #[arg(long)]
        r_cluster: Option<f64>,
        /// Synapse survival budget in percent, (0, 100].
        #[arg(long)]
        r_synapse: Option<f64>,
    },
    /// Print the percentage overlap of two architecture files.
    Overlap {
        /// Architecture file whose clusters form the reference set.
        a: PathBuf,
        /// Architecture file compared against it.
        b: PathBuf,
    },
    /// Regenerate report CSVs from a saved records file.
    Report {
        /// generation_records.json from a finished run.
        #[arg(long)]
        records: PathBuf,
        /// Output directory for the regenerated reports.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (versioned JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_alignment(s: &str) -> Result<Alignment, String> {
    match s {
        "tagged" => Ok(Alignment::GeneTagged),
        "positional" => Ok(Alignment::Positional),
        other => Err(format!("unknown alignment '{other}' (tagged|positional)")),
    }
}

fn apply_common(cfg: &mut ExperimentConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::TrainAncestor { common } => {
            let mut cfg = load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            let experiment = Experiment::new(cfg)?;
            let (ancestor, record) = experiment.train_ancestor()?;
            std::fs::create_dir_all(&experiment.cfg.output_dir)
                .with_context(|| format!("creating {}", experiment.cfg.output_dir.display()))?;
            let path = experiment
                .cfg
                .output_dir
                .join(format!("{}.json", ancestor.network_id()));
            std::fs::write(&path, evosynth::arch::serialize(&ancestor)?)
                .with_context(|| format!("writing {}", path.display()))?;
            let net = &record.networks[0];
            println!(
                "{} accuracy {:.6} storage_bytes {} -> {}",
                net.network_id,
                net.accuracy,
                net.storage_bytes,
                path.display()
            );
            Ok(())
        }
        Command::Evolve {
            common,
            alignment,
            generations,
            population,
            parents,
            r_cluster,
            r_synapse,
        } => {
            let mut cfg = load_config(&common.config)?;
            apply_common(&mut cfg, &common);
            if let Some(alignment) = alignment {
                cfg.policy.alignment = alignment;
            }
            if let Some(generations) = generations {
                cfg.generations = generations;
            }
            if let Some(population) = population {
                cfg.population_size = population;
            }
            if let Some(m) = parents {
                cfg.policy.m = m;
            }
            if let Some(r) = r_cluster {
                cfg.env.r_cluster = r;
            }
            if let Some(r) = r_synapse {
                cfg.env.r_synapse = r;
            }
            cfg.check()?;
            let records = run_experiment(cfg.clone())?;
            check_ancestry(&records)?;
            println!(
                "{} generations written to {}",
                records.len(),
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Overlap { a, b } => {
            let read = |p: &PathBuf| -> anyhow::Result<_> {
                let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                deserialize(&bytes).with_context(|| format!("parsing {}", p.display()))
            };
            let net_a = read(&a)?;
            let net_b = read(&b)?;
            let overlap = percent_overlap(&net_a, &net_b)?;
            println!("{overlap:.6}");
            Ok(())
        }
        Command::Report { records, out } => {
            let (cfg, records) = load_records(&records)?;
            emit_reports(&cfg, &records, &out)?;
            save_config(&cfg, out.join("experiment_manifest.json"))?;
            println!("reports written to {}", out.display());
            Ok(())
        }
    }
}
