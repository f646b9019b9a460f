//! Thin command-line front end over the library: stream generation,
//! pre-training, single continual-learning cells, the full experiment grid,
//! report tables, and checkpoint evaluation.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pedcast::config::ExperimentConfig;
use pedcast::continual::{self, Strategy};
use pedcast::experiment;
use pedcast::model::checkpoint::{load_checkpoint, save_checkpoint};
use pedcast::model::ParamVector;
use pedcast::rng::{self, Stream};
use pedcast::sim::{self, EnvKind};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "pedcast", version, about = "Pedestrian stream forecasting with continual adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run at full scale (long tasks, many epochs) instead of reduced scale.
    #[arg(long)]
    full: bool,
    /// Override the task length in seconds.
    #[arg(long)]
    task_duration: Option<f64>,
    /// Override the number of training epochs per task.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the number of pedestrians.
    #[arg(long)]
    pedestrians: Option<usize>,
    /// Override the anchor penalty weight.
    #[arg(long)]
    ewc_lambda: Option<f64>,
    /// Override the learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None if self.full => ExperimentConfig::default(),
            None => ExperimentConfig::reduced(),
        };
        if let Some(v) = self.task_duration {
            cfg.task_duration_s = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.pedestrians {
            cfg.n_pedestrians = v;
        }
        if let Some(v) = self.ewc_lambda {
            cfg.ewc_lambda = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic state stream for one scenario.
    Simulate {
        /// Built-in scenario name (square, obstacle, hall, open).
        #[arg(long)]
        scenario: String,
        /// Scenario definition file instead of a built-in name.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        ticks: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        pedestrians: usize,
    },
    /// Pre-train the prediction model on the open environment.
    Pretrain {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one (sequence, strategy) cell of the experiment.
    RunScl {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated environment order, e.g. square,obstacle,hall.
        #[arg(long)]
        sequence: String,
        #[arg(long, default_value = "scl")]
        strategy: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a pre-trained checkpoint instead of pre-training here.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Run the full strategy-by-sequence grid from the configuration.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory; defaults to the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a results directory into summary tables.
    Report {
        /// Results directory containing manifest.json.
        results: PathBuf,
    },
    /// Evaluate a checkpoint (or the constant-velocity baseline) on one
    /// environment's frozen validation set.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        env: String,
        /// Checkpoint path; omit to evaluate the constant-velocity baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            scenario_file,
            ticks,
            seed,
            out,
            pedestrians,
        } => {
            let scen = match scenario_file {
                Some(path) => sim::load_scenario(&path)?,
                None => {
                    let kind: EnvKind = scenario.parse()?;
                    sim::make_scenario(kind, pedestrians, seed)
                }
            };
            let states = sim::run_scenario(&scen, ticks, seed)?;
            sim::stream::save_stream(&out, &scen.name, scen.params.dt, &states)?;
            println!(
                "wrote {} ticks of `{}` ({} agents) to {}",
                states.len(),
                scen.name,
                scen.n_pedestrians,
                out.display()
            );
        }
        Command::Pretrain { config, seed, out } => {
            let cfg = config.load()?;
            let mut init_rng = rng::stream_rng(seed, Stream::Init, 0);
            let theta_random = ParamVector::random(cfg.model_config(), &mut init_rng);
            let (theta0, stats) = continual::pretrain(&theta_random, &cfg, seed)?;
            save_checkpoint(&out, &theta0)?;
            let last = stats.last().map(|s| s.total).unwrap_or(f64::NAN);
            println!(
                "pretrained {} parameters for {} epochs (final loss {last:.6}) -> {}",
                theta0.len(),
                stats.len(),
                out.display()
            );
        }
        Command::RunScl {
            config,
            sequence,
            strategy,
            seed,
            out,
            pretrained,
        } => {
            let cfg = config.load()?;
            let sequence = experiment::parse_sequence(&sequence)?;
            let strategy: Strategy = strategy.parse()?;
            std::fs::create_dir_all(&out)?;
            let theta0 = match pretrained {
                Some(path) => load_checkpoint(&path)?,
                None => experiment::shared_pretrained(&cfg, seed, &out)?,
            };
            let envs: Vec<EnvKind> = sequence.clone();
            let validation =
                continual::build_validation_sets(&envs, &cfg, experiment::VALIDATION_SEED)?;
            let run = continual::run_scl(&sequence, &theta0, strategy, &cfg, seed, &validation)?;
            let dir = out.join(experiment::cell_dir_name(strategy, &sequence, seed));
            experiment::persist_run(&dir, seed, &run)?;
            println!("cell written to {}", dir.display());
            for r in &run.records {
                println!(
                    "phase {} {:>8}: ADE {:.4} +/- {:.4}  FDE {:.4} +/- {:.4}",
                    r.phase, r.env, r.ade_mean, r.ade_std, r.fde_mean, r.fde_std
                );
            }
        }
        Command::Run { config, out } => {
            let cfg = config.load()?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let manifest = experiment::run_grid(&cfg, &out_dir)?;
            let failed: Vec<_> = manifest
                .cells
                .iter()
                .filter(|c| c.status != "ok")
                .collect();
            println!(
                "{} cells finished, {} failed; manifest at {}",
                manifest.cells.len() - failed.len(),
                failed.len(),
                out_dir.join("manifest.json").display()
            );
            if !failed.is_empty() {
                for cell in &failed {
                    eprintln!(
                        "failed: {} {} seed {}: {}",
                        cell.strategy, cell.sequence, cell.seed, cell.status
                    );
                }
                bail!("{} cells failed", failed.len());
            }
        }
        Command::Report { results } => {
            let report = experiment::report(&results)?;
            println!(
                "{:<10} {:<28} {:>18} {:>18}",
                "strategy", "sequence", "forgotten ADE/FDE", "seq-end ADE/FDE"
            );
            for row in &report.summary {
                println!(
                    "{:<10} {:<28} {:>+8.3}/{:>+8.3} {:>9.3}/{:>8.3}",
                    row.strategy,
                    row.sequence,
                    row.forgotten_ade_mean,
                    row.forgotten_fde_mean,
                    row.seqend_ade_mean,
                    row.seqend_fde_mean
                );
            }
            println!(
                "tables written next to the manifest: table_sequences.csv, table_significance.csv"
            );
        }
        Command::Eval {
            config,
            env,
            checkpoint,
        } => {
            let cfg = config.load()?;
            let env: EnvKind = env.parse()?;
            let row = experiment::evaluate_checkpoint(checkpoint.as_deref(), env, &cfg)?;
            println!(
                "{} on {}: ADE {:.4} +/- {:.4}  FDE {:.4} +/- {:.4}  (n = {})",
                row.strategy, row.env, row.ade_mean, row.ade_std, row.fde_mean, row.fde_std, row.n
            );
        }
    }
    Ok(())
}
