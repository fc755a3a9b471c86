use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairprice::parallel::Execution;
use fairprice::runner::{self, ExperimentConfig, RunOptions, DEFAULT_OUT, OUT_ENV, PRESETS};
use fairprice::{Error, Result};

/// Q-learning dynamic pricing with a group-fairness objective.
#[derive(Debug, Parser)]
#[command(name = "fairprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an experiment (preset name or JSON config) over one or more seeds.
    Run {
        /// Preset name (see `list-presets`) or path to a JSON config.
        config: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Output root; the experiment writes into `<out>/<name>`.
        #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
        out: PathBuf,
        /// Write every bid as NDJSON next to the metrics.
        #[arg(long)]
        log_transitions: bool,
        /// Run seeds one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Replay saved weights greedily (no exploration, no training).
    Evaluate {
        weights: PathBuf,
        /// Preset name or path to a JSON config describing the market.
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the built-in experiments.
    ListPresets,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Seed to use (with --seeds, the first of a consecutive range).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Bids per epoch.
    #[arg(long)]
    bids: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        match (self.seed, self.seeds) {
            (_, Some(0)) => return Err(Error::config("--seeds", "must be positive")),
            (Some(s), n) => config.seeds = (0..n.unwrap_or(1) as u64).map(|i| s + i).collect(),
            (None, Some(n)) => config.seeds = (1..=n as u64).collect(),
            (None, None) => {}
        }
        if let Some(e) = self.epochs {
            config.agent.epochs = e;
        }
        if let Some(b) = self.bids {
            config.agent.bids = b;
        }
        config.validate()
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListPresets => {
            for (name, about) in PRESETS {
                println!("{name}\t{about}");
            }
        }
        Command::Run {
            config,
            overrides,
            out,
            log_transitions,
            sequential,
        } => {
            let mut config = runner::resolve(&config)?;
            overrides.apply(&mut config)?;
            let options = RunOptions {
                execution: if sequential { Execution::Sequential } else { Execution::Parallel },
                log_transitions,
            };
            let report = runner::run(&config, &out, options)?;
            let s = &report.summary;
            println!(
                "{}: {} seed(s) -> {}",
                config.name,
                report.seeds.len(),
                report.dir.display()
            );
            println!(
                "final {} epochs: cum_bid {:.1} ± {:.1}, fairness {:.3} ± {:.3}, reject ratio {:.3} ± {:.3}, expected revenue {:.1} ± {:.1}",
                s.window,
                s.cum_bid.mean,
                s.cum_bid.std,
                s.fairness.mean,
                s.fairness.std,
                s.reject_ratio.mean,
                s.reject_ratio.std,
                s.expected_revenue.mean,
                s.expected_revenue.std
            );
        }
        Command::Evaluate {
            weights,
            config,
            overrides,
        } => {
            let mut config = runner::resolve(&config)?;
            overrides.apply(&mut config)?;
            let seed = config.seeds[0];
            let ev = runner::evaluate(&weights, &config, seed)?;
            let report = serde_json::json!({
                "seed": ev.seed,
                "epochs": ev.epochs,
                "means": ev.means,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
