use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::EpisodeOutcome;

/// Column order of every per-run metrics file.
pub const METRIC_COLUMNS: [&str; 8] = [
    "episode",
    "cumulative_reward",
    "generator_cost",
    "voltage_violation",
    "power_loss",
    "line_overload",
    "open_lines",
    "penalties",
];

/// One row of a metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub cumulative_reward: f64,
    /// Generation cost above the episode's base topology, $/h, summed over steps.
    pub generator_cost: f64,
    /// Per-unit band excess summed over buses and steps.
    pub voltage_violation: f64,
    /// Active-power loss in MW, summed over steps.
    pub power_loss: f64,
    /// Loading excess above rating, summed over lines and steps.
    pub line_overload: f64,
    /// Open lines at the end of the episode.
    pub open_lines: usize,
    /// Steps ending in the islanding or divergence penalty.
    pub penalties: usize,
}

impl EpisodeMetrics {
    pub fn from_outcome(episode: usize, o: &EpisodeOutcome) -> Self {
        EpisodeMetrics {
            episode,
            cumulative_reward: o.cumulative_reward,
            generator_cost: o.generator_cost,
            voltage_violation: o.voltage_violation,
            power_loss: o.power_loss,
            line_overload: o.line_overload,
            open_lines: o.open_lines,
            penalties: o.penalties,
        }
    }

    /// Value of a numeric column other than `episode`.
    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "cumulative_reward" => self.cumulative_reward,
            "generator_cost" => self.generator_cost,
            "voltage_violation" => self.voltage_violation,
            "power_loss" => self.power_loss,
            "line_overload" => self.line_overload,
            "open_lines" => self.open_lines as f64,
            "penalties" => self.penalties as f64,
            _ => return None,
        })
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_metrics(path: &Path, rows: &[EpisodeMetrics]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    if rows.is_empty() {
        w.write_record(METRIC_COLUMNS).map_err(csv_err(path))?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?;
    if header.iter().ne(METRIC_COLUMNS) {
        return Err(HarnessError::Config(format!(
            "{} does not have the metrics header",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(csv_err(path)))
        .collect()
}

/// Mean and standard error across seeds of one metric, per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub metric: String,
    pub n_seeds: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√n_seeds`; zero for a single seed.
    pub stderr: Vec<f64>,
}

/// Aggregates equally long runs; one series per metric column.
pub fn aggregate(runs: &[Vec<EpisodeMetrics>]) -> Result<Vec<AggregateSeries>, HarnessError> {
    let Some(first) = runs.first() else {
        return Err(HarnessError::Config("nothing to aggregate".into()));
    };
    let episodes = first.len();
    if runs.iter().any(|r| r.len() != episodes) {
        return Err(HarnessError::Config(
            "runs have different numbers of episodes".into(),
        ));
    }
    let n = runs.len();
    Ok(METRIC_COLUMNS[1..]
        .iter()
        .map(|metric| {
            let mut mean = Vec::with_capacity(episodes);
            let mut stderr = Vec::with_capacity(episodes);
            for e in 0..episodes {
                let xs: Vec<f64> = runs
                    .iter()
                    .map(|r| r[e].value(metric).unwrap_or(0.0))
                    .collect();
                let m = xs.iter().sum::<f64>() / n as f64;
                let se = if n > 1 {
                    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
                    var.sqrt() / (n as f64).sqrt()
                } else {
                    0.0
                };
                mean.push(m);
                stderr.push(se);
            }
            AggregateSeries {
                metric: metric.to_string(),
                n_seeds: n,
                mean,
                stderr,
            }
        })
        .collect())
}

#[derive(Serialize)]
struct AggregateRow {
    episode: usize,
    mean: f64,
    stderr: f64,
    n_seeds: usize,
}

/// Columns `episode, mean, stderr, n_seeds`.
pub fn write_aggregate(path: &Path, series: &AggregateSeries) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (e, (m, s)) in series.mean.iter().zip(&series.stderr).enumerate() {
        w.serialize(AggregateRow {
            episode: e,
            mean: *m,
            stderr: *s,
            n_seeds: series.n_seeds,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
