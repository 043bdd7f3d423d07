//! Experiment runner for adaptive endpointing.
//!
//! Subcommands: `generate` (corpus files), `run` (one config-driven
//! experiment), `sweep` (threshold or reward-ratio trade-off curves),
//! `report` (cross-run comparison tables), `preset` (write the canned
//! experiment configs). Exit code 0 on success; on failure a machine-parsable
//! `error[<category>]: ...` line goes to stderr and the exit code encodes the
//! category.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adaptive_ep::experiment::{
    cmd_generate, cmd_run_full, comparison_csv, comparison_table, preset,
    sweep_bandit_reward_ratios, sweep_supervised_thresholds, write_checkpoint, write_run_outputs,
    AgentSpec, ExperimentConfig, RunMeta, RunResult,
};
use adaptive_ep::{Error, Result};

/// Environment variable naming the default output root for runs.
const OUTPUT_ROOT_ENV: &str = "ADAPTIVE_EP_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "adaptive-ep",
    version,
    about = "Adaptive endpointing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Override the generator (corpus) seed.
    #[arg(long)]
    corpus_seed: Option<u64>,

    /// Override the agent seed (classifier or bandit).
    #[arg(long)]
    agent_seed: Option<u64>,

    /// Override the number of online decisions for bandit runs.
    #[arg(long)]
    steps: Option<usize>,

    /// Override the run name.
    #[arg(long)]
    name: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(&self.config).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", self.config.display()))
        })?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(seed) = self.corpus_seed {
            config.generator.seed = seed;
        }
        if let Some(seed) = self.agent_seed {
            match &mut config.agent {
                AgentSpec::Supervised { classifier, .. } => classifier.seed = seed,
                AgentSpec::Bandit { bandit, .. } => bandit.seed = seed,
                _ => {}
            }
        }
        if let Some(steps) = self.steps {
            config.n_online_steps = steps;
        }
        if let Some(name) = &self.name {
            config.name = name.clone();
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Knob {
    /// Classifier decision threshold.
    Tau,
    /// Bandit cutoff-to-latency reward weight ratio (values are betas).
    BetaAlpha,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus and write it as corpus files (manifest/train/dev/test).
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Corpus output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment: train/evaluate the configured agent.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run output directory (defaults to `<output root>/<run name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a trade-off knob and write the resulting curve.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Knob values, comma separated (taus, or betas for beta-alpha).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Which knob to sweep; inferred from the agent kind when omitted.
        #[arg(long, value_enum)]
        knob: Option<Knob>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare persisted runs (run.json files) against the standard-only baseline.
    Report {
        /// run.json files; exactly one must be a standard_only run.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the comparison as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the canned experiment configs for one preset.
    Preset {
        /// idealized | information | first_segment
        #[arg(long)]
        name: String,
        /// Directory receiving one config JSON per run.
        #[arg(long)]
        out: PathBuf,
    },
}

fn output_dir(explicit: Option<PathBuf>, run_name: &str) -> PathBuf {
    match explicit {
        Some(dir) => dir,
        None => {
            let root = std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            root.join(run_name)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let config = config.load()?;
            let manifest = cmd_generate(&config, &out)?;
            println!(
                "wrote corpus to {} ({} records, train/dev/test = {}/{}/{})",
                out.display(),
                manifest.total_records(),
                manifest.train.records,
                manifest.dev.records,
                manifest.test.records
            );
        }
        Command::Run { config, out } => {
            let config = config.load()?;
            let dir = output_dir(out, &config.name);
            let started = Instant::now();
            let output = cmd_run_full(&config)?;
            let meta = RunMeta {
                wall_clock_secs: started.elapsed().as_secs_f64(),
            };
            write_run_outputs(&dir, &config, &output.result, &meta)?;
            let reward = match &config.agent {
                AgentSpec::Bandit { reward, .. } => Some(*reward),
                _ => None,
            };
            write_checkpoint(&dir, &output.agent, reward)?;
            let report = output.result.primary_report();
            println!(
                "run {} finished: early_ep_rate={:.4}% tm95={:.1}ms (outputs in {})",
                config.name,
                report.early_ep_rate,
                report.tm95,
                dir.display()
            );
        }
        Command::Sweep {
            config,
            values,
            knob,
            out,
        } => {
            let config = config.load()?;
            let knob = match knob {
                Some(k) => k,
                None => match &config.agent {
                    AgentSpec::Supervised { .. } => Knob::Tau,
                    AgentSpec::Bandit { .. } => Knob::BetaAlpha,
                    _ => {
                        return Err(Error::Config(
                            "sweeps need a supervised or bandit agent".into(),
                        ))
                    }
                },
            };
            let curve = match knob {
                Knob::Tau => sweep_supervised_thresholds(&config, &values)?,
                Knob::BetaAlpha => sweep_bandit_reward_ratios(&config, &values)?,
            };
            let dir = output_dir(out, &format!("{}_sweep", config.name));
            std::fs::create_dir_all(&dir)?;
            write_text(&dir.join("curve.csv"), &curve.to_csv())?;
            let mut json = serde_json::to_string_pretty(&curve)?;
            json.push('\n');
            write_text(&dir.join("curve.json"), &json)?;
            println!(
                "swept {} over {} points (outputs in {})",
                curve.knob_name,
                curve.points.len(),
                dir.display()
            );
        }
        Command::Report { runs, csv } => {
            let mut results: Vec<RunResult> = Vec::with_capacity(runs.len());
            for path in &runs {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read run result {}: {e}", path.display()))
                })?;
                results.push(serde_json::from_str(&text)?);
            }
            let table = comparison_table(&results)?;
            print!("{table}");
            if let Some(path) = csv {
                write_text(&path, &comparison_csv(&results)?)?;
            }
        }
        Command::Preset { name, out } => {
            let configs = preset(&name)?;
            std::fs::create_dir_all(&out)?;
            for config in &configs {
                let path = out.join(format!("{}.json", config.name));
                let mut json = serde_json::to_string_pretty(config)?;
                json.push('\n');
                write_text(&path, &json)?;
            }
            println!("wrote {} configs to {}", configs.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(error: &Error) -> i32 {
    match error.category() {
        "validation" => 2,
        "config" => 3,
        "corpus" => 4,
        "io" => 5,
        "serialization" => 6,
        "shape" => 7,
        "train" => 8,
        "tape" => 9,
        "insufficient-sample" => 10,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(exit_code(&e));
    }
}
