//! Per-epoch statistics, the visit-count learning-rate metric and the CSV
//! schema shared by every run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregates for one epoch. Prices are in price units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub epsilon: f64,
    pub bids: u64,
    /// Sum of accepted bid prices; rejections contribute 0.
    pub cum_bid: f64,
    pub mean_fairness: f64,
    pub rejects: u64,
    pub reject_ratio: f64,
    pub expected_revenue: f64,
    pub mean_reward: f64,
    pub lr_metric: f64,
    pub group_means: Vec<f64>,
}

/// Sum of the outcome prices clamped at zero, so penalties do not count.
pub fn cumulative_bid(prices: impl IntoIterator<Item = f64>) -> f64 {
    prices.into_iter().map(|p| p.max(0.0)).sum()
}

/// Cumulative bid scaled by the acceptance fraction.
pub fn expected_revenue(cum_bid: f64, reject_ratio: f64) -> f64 {
    cum_bid * (1.0 - reject_ratio)
}

/// Mean visit count over the distinct pairs in `counts` (zeros are ignored).
/// Returns 0 when nothing was visited.
pub fn learning_rate_metric(counts: impl IntoIterator<Item = u64>) -> f64 {
    let (mut distinct, mut total) = (0u64, 0u64);
    for c in counts.into_iter().filter(|&c| c > 0) {
        distinct += 1;
        total += c;
    }
    if distinct == 0 {
        0.0
    } else {
        total as f64 / distinct as f64
    }
}

/// Which visits enter the learning-rate metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateMode {
    /// Counts accumulate over the whole experiment.
    #[default]
    Cumulative,
    /// Counts restart every epoch.
    PerEpoch,
}

/// Visit counts of (state, action) pairs.
#[derive(Debug, Clone)]
pub struct VisitCounter {
    actions: usize,
    total: Vec<u32>,
    epoch: Vec<u32>,
    touched: Vec<usize>,
    distinct_total: u64,
    visits_total: u64,
    visits_epoch: u64,
}

impl VisitCounter {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            actions,
            total: vec![0; states * actions],
            epoch: vec![0; states * actions],
            touched: Vec::new(),
            distinct_total: 0,
            visits_total: 0,
            visits_epoch: 0,
        }
    }

    pub fn record(&mut self, state: usize, action: usize) {
        let k = state * self.actions + action;
        if self.total[k] == 0 {
            self.distinct_total += 1;
        }
        if self.epoch[k] == 0 {
            self.touched.push(k);
        }
        self.total[k] += 1;
        self.epoch[k] += 1;
        self.visits_total += 1;
        self.visits_epoch += 1;
    }

    pub fn start_epoch(&mut self) {
        for &k in &self.touched {
            self.epoch[k] = 0;
        }
        self.touched.clear();
        self.visits_epoch = 0;
    }

    pub fn count(&self, state: usize, action: usize) -> u32 {
        self.total[state * self.actions + action]
    }

    pub fn metric(&self, mode: LearningRateMode) -> f64 {
        match mode {
            LearningRateMode::Cumulative if self.distinct_total > 0 => {
                self.visits_total as f64 / self.distinct_total as f64
            }
            LearningRateMode::PerEpoch if !self.touched.is_empty() => {
                self.visits_epoch as f64 / self.touched.len() as f64
            }
            _ => 0.0,
        }
    }
}

/// Running mean of `values` up to and including each position.
pub fn running_average(values: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Cumulative reward curve min-max scaled to `[0, 1]`. A flat curve maps to
/// all zeros.
pub fn scaled_cumulative_reward(series: &[EpochStats]) -> Vec<f64> {
    let mut acc = 0.0;
    let cum: Vec<f64> = series
        .iter()
        .map(|s| {
            acc += s.mean_reward * s.bids as f64;
            acc
        })
        .collect();
    let lo = cum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; cum.len()];
    }
    cum.iter().map(|c| (c - lo) / (hi - lo)).collect()
}

/// Formats `x` with 6 significant digits, `%g`-style.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

pub fn csv_header(groups: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "epoch",
        "epsilon",
        "cum_bid",
        "run_avg_cum_bid",
        "mean_fairness",
        "run_avg_fairness",
        "reject_ratio",
        "expected_revenue",
        "mean_reward_scaled",
        "lr_metric",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=groups).map(|g| format!("g{g}_mean")));
    cols
}

/// Writes the series as CSV: a header, then one row per epoch. Floats carry 6
/// significant digits.
pub fn write_csv<W: Write>(series: &[EpochStats], mut out: W) -> std::io::Result<()> {
    let groups = series.first().map_or(0, |s| s.group_means.len());
    writeln!(out, "{}", csv_header(groups).join(","))?;
    let cum: Vec<f64> = series.iter().map(|s| s.cum_bid).collect();
    let fair: Vec<f64> = series.iter().map(|s| s.mean_fairness).collect();
    let run_cum = running_average(&cum);
    let run_fair = running_average(&fair);
    for (i, s) in series.iter().enumerate() {
        let mut row = vec![
            s.epoch.to_string(),
            format_sig6(s.epsilon),
            format_sig6(s.cum_bid),
            format_sig6(run_cum[i]),
            format_sig6(s.mean_fairness),
            format_sig6(run_fair[i]),
            format_sig6(s.reject_ratio),
            format_sig6(s.expected_revenue),
            format_sig6(s.mean_reward),
            format_sig6(s.lr_metric),
        ];
        row.extend(s.group_means.iter().map(|&g| format_sig6(g)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn emit_csv(series: &[EpochStats], path: &Path) -> Result<()> {
    if series.is_empty() {
        return Err(Error::config("series", "refusing to write an empty metrics series"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(series, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub epoch: usize,
    pub epsilon: f64,
    pub cum_bid: f64,
    pub run_avg_cum_bid: f64,
    pub mean_fairness: f64,
    pub run_avg_fairness: f64,
    pub reject_ratio: f64,
    pub expected_revenue: f64,
    pub mean_reward_scaled: f64,
    pub lr_metric: f64,
    pub group_means: Vec<f64>,
}

/// The rows [`write_csv`] would emit, at full precision.
pub fn rows_from_stats(series: &[EpochStats]) -> Vec<CsvRow> {
    let cum: Vec<f64> = series.iter().map(|s| s.cum_bid).collect();
    let fair: Vec<f64> = series.iter().map(|s| s.mean_fairness).collect();
    let run_cum = running_average(&cum);
    let run_fair = running_average(&fair);
    series
        .iter()
        .enumerate()
        .map(|(i, s)| CsvRow {
            epoch: s.epoch,
            epsilon: s.epsilon,
            cum_bid: s.cum_bid,
            run_avg_cum_bid: run_cum[i],
            mean_fairness: s.mean_fairness,
            run_avg_fairness: run_fair[i],
            reject_ratio: s.reject_ratio,
            expected_revenue: s.expected_revenue,
            mean_reward_scaled: s.mean_reward,
            lr_metric: s.lr_metric,
            group_means: s.group_means.clone(),
        })
        .collect()
}

pub fn parse_csv<R: BufRead>(input: R, origin: &Path) -> Result<Vec<CsvRow>> {
    let bad = |reason: String| Error::Format {
        path: origin.to_path_buf(),
        reason,
    };
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(|e| Error::io(origin, e))?;
    let cols: Vec<&str> = header.split(',').collect();
    let groups = cols.len().saturating_sub(10);
    if cols != csv_header(groups) {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(format!("row {}: expected {} fields, got {}", n + 1, cols.len(), fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{}` is not a number", n + 1, fields[i])))
        };
        rows.push(CsvRow {
            epoch: fields[0]
                .parse()
                .map_err(|_| bad(format!("row {}: bad epoch `{}`", n + 1, fields[0])))?,
            epsilon: num(1)?,
            cum_bid: num(2)?,
            run_avg_cum_bid: num(3)?,
            mean_fairness: num(4)?,
            run_avg_fairness: num(5)?,
            reject_ratio: num(6)?,
            expected_revenue: num(7)?,
            mean_reward_scaled: num(8)?,
            lr_metric: num(9)?,
            group_means: (10..cols.len()).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file), path)
}

/// Final-window averages of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeans {
    pub cum_bid: f64,
    pub fairness: f64,
    pub reject_ratio: f64,
    pub expected_revenue: f64,
    pub group_means: Vec<f64>,
}

/// Means of the last `window` rows (all rows if fewer).
pub fn window_means(rows: &[CsvRow], window: usize) -> WindowMeans {
    let tail = &rows[rows.len().saturating_sub(window)..];
    let n = tail.len().max(1) as f64;
    let mean = |f: &dyn Fn(&CsvRow) -> f64| tail.iter().map(f).sum::<f64>() / n;
    let groups = tail.first().map_or(0, |r| r.group_means.len());
    WindowMeans {
        cum_bid: mean(&|r| r.cum_bid),
        fairness: mean(&|r| r.mean_fairness),
        reject_ratio: mean(&|r| r.reject_ratio),
        expected_revenue: mean(&|r| r.expected_revenue),
        group_means: (0..groups).map(|g| mean(&|r| r.group_means[g])).collect(),
    }
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Cross-seed aggregate of final-window statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub window: usize,
    pub cum_bid: MeanStd,
    pub fairness: MeanStd,
    pub reject_ratio: MeanStd,
    pub expected_revenue: MeanStd,
    pub group_means: Vec<MeanStd>,
}

impl Summary {
    pub fn from_runs(name: &str, seeds: &[u64], runs: &[Vec<CsvRow>], window: usize) -> Self {
        let per_run: Vec<WindowMeans> = runs.iter().map(|r| window_means(r, window)).collect();
        let col = |f: &dyn Fn(&WindowMeans) -> f64| MeanStd::of(&per_run.iter().map(f).collect::<Vec<_>>());
        let groups = per_run.first().map_or(0, |w| w.group_means.len());
        Self {
            name: name.to_owned(),
            seeds: seeds.to_vec(),
            window,
            cum_bid: col(&|w| w.cum_bid),
            fairness: col(&|w| w.fairness),
            reject_ratio: col(&|w| w.reject_ratio),
            expected_revenue: col(&|w| w.expected_revenue),
            group_means: (0..groups).map(|g| col(&|w| w.group_means[g])).collect(),
        }
    }
}
