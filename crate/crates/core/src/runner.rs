//! Experiment configs, the built-in presets, and multi-seed execution.
//!
//! A run writes, per seed, `seed-<s>.csv` (one row per epoch) and
//! `seed-<s>.weights` (final network and optimizer state), optionally
//! `seed-<s>.transitions.ndjson`, and finally `summary.json`. The summary is
//! computed from the CSV files as written, so an external script reading the
//! same files reproduces it exactly.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, EpsilonSchedule, Market, Simulation};
use crate::encoding::{ActionGrid, FairnessPartition};
use crate::environment::GroupSpec;
use crate::error::{Error, Result};
use crate::metrics::{emit_csv, read_csv, rows_from_stats, window_means, EpochStats, Summary, WindowMeans};
use crate::parallel::{map_jobs, Execution};
use crate::qnet::QNet;
use crate::reward::RewardParams;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FAIRPRICE_OUT";
/// Output root used when neither `--out` nor [`OUT_ENV`] is given.
pub const DEFAULT_OUT: &str = "runs";
/// Epochs averaged for the summary statistics.
pub const SUMMARY_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: 0.0,
            max: 10.0,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub mesh: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self { mesh: 0.01 }
    }
}

/// One experiment: market, reward, agent settings and the seeds to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub agent: AgentConfig,
    pub reward: RewardParams,
    pub grid: GridSpec,
    pub partition: PartitionSpec,
    pub groups: Vec<GroupSpec>,
    /// Relative share of each group in the customer portfolio.
    pub group_weights: Vec<f64>,
    /// Output directory; defaults to `<out root>/<name>`.
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let groups = GroupSpec::reference_groups();
        Self {
            name: "custom".to_owned(),
            agent: AgentConfig::default(),
            reward: RewardParams::default(),
            grid: GridSpec::default(),
            partition: PartitionSpec::default(),
            group_weights: vec![1.0; groups.len()],
            groups,
            output: None,
            seeds: vec![1, 2, 3],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self
            .name
            .chars()
            .any(|c| std::path::is_separator(c) || c.is_control())
        {
            return Err(Error::config("name", "must not contain path separators"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::config("seeds", format!("seed {dup} is listed twice")));
        }
        if self.groups.is_empty() {
            return Err(Error::config("groups", "need at least one group"));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.id != i {
                return Err(Error::config(
                    format!("groups[{i}].id"),
                    format!("expected {i}, got {}", g.id),
                ));
            }
            if !(g.b.is_finite() && g.w.is_finite()) {
                return Err(Error::config(format!("groups[{i}]"), "coefficients must be finite"));
            }
        }
        if self.group_weights.len() != self.groups.len() {
            return Err(Error::config(
                "group_weights",
                format!("{} weights for {} groups", self.group_weights.len(), self.groups.len()),
            ));
        }
        self.agent.validate()?;
        self.reward.validate()?;
        self.market()?;
        Ok(())
    }

    /// Builds the market this config describes.
    pub fn market(&self) -> Result<Market> {
        Ok(Market {
            groups: self.groups.clone(),
            group_weights: self.group_weights.clone(),
            grid: ActionGrid::new(self.grid.min, self.grid.max, self.grid.step)?,
            partition: FairnessPartition::new(self.partition.mesh)?,
            reward: self.reward,
        })
    }

    pub fn output_dir(&self, root: &Path) -> PathBuf {
        self.output.clone().unwrap_or_else(|| root.join(&self.name))
    }
}

/// Reads and validates a JSON config. Missing fields take their defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|source| Error::ConfigParse {
        path: path.to_owned(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

/// Names and one-line descriptions of the built-in presets.
pub const PRESETS: [(&str, &str); 5] = [
    ("exp1", "revenue only (beta_p=1, beta_f=0, p_t=1)"),
    ("exp2", "fairness only (beta_p=0, beta_f=1, f_t=1)"),
    ("exp3", "revenue and fairness, f_t=0.90"),
    ("exp4", "revenue and fairness, f_t=0.75"),
    ("exp5", "null model: uniformly random bids, no learning"),
];

/// A built-in experiment by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (beta_price, beta_fairness, target_fairness) = match name {
        "exp1" => (1.0, 0.0, 1.0),
        "exp2" => (0.0, 1.0, 1.0),
        "exp3" => (1.0, 1.0, 0.9),
        "exp4" => (1.0, 1.0, 0.75),
        "exp5" => (0.0, 0.0, 1.0),
        _ => return None,
    };
    let mut config = ExperimentConfig {
        name: name.to_owned(),
        reward: RewardParams {
            beta_price,
            beta_fairness,
            target_price: 1.0,
            target_fairness,
            ..RewardParams::default()
        },
        ..ExperimentConfig::default()
    };
    if name == "exp5" {
        config.agent.epsilon = EpsilonSchedule::Constant { value: 1.0 };
        config.agent.learn = false;
    }
    Some(config)
}

/// A preset name or a path to a JSON config.
pub fn resolve(spec: &str) -> Result<ExperimentConfig> {
    match preset(spec) {
        Some(config) => Ok(config),
        None if Path::new(spec).exists() => load_config(Path::new(spec)),
        None => Err(Error::config(
            "config",
            format!("`{spec}` is neither a preset nor an existing file"),
        )),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub execution: Execution,
    /// Write every bid to `seed-<s>.transitions.ndjson`.
    pub log_transitions: bool,
}

/// Files written for one seed.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub csv: PathBuf,
    pub weights: PathBuf,
    pub transitions: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub seeds: Vec<SeedArtifacts>,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.csv"))
}

pub fn weights_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.weights"))
}

pub fn transitions_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.transitions.ndjson"))
}

/// Trains one seed and writes its artifacts into `dir`.
pub fn run_seed(config: &ExperimentConfig, seed: u64, dir: &Path, log_transitions: bool) -> Result<SeedArtifacts> {
    let mut agent = config.agent.clone();
    agent.record_transitions = log_transitions;
    let sim = Simulation::new(agent, config.market()?, seed)?;

    let transitions = log_transitions.then(|| transitions_path(dir, seed));
    let mut log = match &transitions {
        Some(path) => Some((BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?), path)),
        None => None,
    };
    let result = sim.run(|records| {
        if let Some((out, path)) = log.as_mut() {
            for r in records {
                serde_json::to_writer(&mut *out, r).map_err(|e| Error::io(*path, e.into()))?;
                out.write_all(b"\n").map_err(|e| Error::io(*path, e))?;
            }
        }
        Ok(())
    })?;
    if let Some((mut out, path)) = log {
        out.flush().map_err(|e| Error::io(path, e))?;
    }

    let csv = csv_path(dir, seed);
    emit_csv(&result.stats, &csv)?;
    let weights = weights_path(dir, seed);
    result.net.save(&result.adam, &weights)?;
    Ok(SeedArtifacts {
        seed,
        csv,
        weights,
        transitions,
    })
}

/// Runs every seed of `config` under `root` and writes the summary.
pub fn run(config: &ExperimentConfig, root: &Path, options: RunOptions) -> Result<RunReport> {
    config.validate()?;
    let dir = config.output_dir(root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let results = map_jobs(&config.seeds, options.execution, |&seed| {
        run_seed(config, seed, &dir, options.log_transitions)
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (summary_path, summary) = write_summary(&config.name, &dir, &config.seeds)?;
    Ok(RunReport {
        dir,
        seeds,
        summary_path,
        summary,
    })
}

/// Recomputes the summary from the per-seed CSVs in `dir`.
pub fn summarize(name: &str, dir: &Path, seeds: &[u64]) -> Result<Summary> {
    let runs = seeds
        .iter()
        .map(|&s| read_csv(&csv_path(dir, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary::from_runs(name, seeds, &runs, SUMMARY_WINDOW))
}

fn write_summary(name: &str, dir: &Path, seeds: &[u64]) -> Result<(PathBuf, Summary)> {
    let summary = summarize(name, dir, seeds)?;
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((path, summary))
}

/// Greedy replay of saved weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub seed: u64,
    pub epochs: usize,
    /// Averages over all evaluated epochs.
    pub means: WindowMeans,
    pub stats: Vec<EpochStats>,
}

/// Replays the policy in `weights` with ε = 0 and no training.
pub fn evaluate(weights: &Path, config: &ExperimentConfig, seed: u64) -> Result<Evaluation> {
    config.validate()?;
    let (net, adam) = QNet::load(weights)?;
    let mut agent = config.agent.clone();
    agent.epsilon = EpsilonSchedule::Constant { value: 0.0 };
    agent.learn = false;
    agent.record_transitions = false;
    let epochs = agent.epochs;
    let result = Simulation::with_network(agent, config.market()?, net, adam, seed)?.run(|_| Ok(()))?;
    let rows = rows_from_stats(&result.stats);
    Ok(Evaluation {
        seed,
        epochs,
        means: window_means(&rows, epochs),
        stats: result.stats,
    })
}
