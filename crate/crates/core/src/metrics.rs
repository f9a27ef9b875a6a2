//! Environment characterization and cross-domain evaluation arithmetic.
//!
//! Rates are percentages. Ranking compares rates as fixed-point integers
//! (micro-percent) so a 0.5 tie threshold is never blurred by binary floats.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no input to aggregate")]
    EmptyInput,
    #[error("baseline is zero")]
    ZeroBaseline,
    #[error("key sets differ: {0}")]
    KeyMismatch(String),
    #[error("eval column `{0}` has fewer than 2 out-of-domain entries")]
    InsufficientEntries(String),
    #[error("duplicate cell {0}")]
    DuplicateCell(String),
    #[error("t_max must be at least 1")]
    ZeroHorizon,
}

/// Mean byte length of the unaugmented observation over every step.
pub fn avg_char_count(trajectories: &[Trajectory]) -> Result<f64, MetricsError> {
    mean(trajectories.iter().flat_map(|t| t.steps.iter().map(|s| s.stripped_obs().len() as f64)))
}

/// Mean episode length where failures count as `t_max`.
pub fn avg_traj_length(trajectories: &[Trajectory], t_max: u32) -> Result<f64, MetricsError> {
    penalized_mean_length(trajectories.iter().map(|t| (t.steps.len(), t.success)), t_max)
}

/// `(length, success)` form of [`avg_traj_length`].
pub fn penalized_mean_length(
    episodes: impl IntoIterator<Item = (usize, bool)>,
    t_max: u32,
) -> Result<f64, MetricsError> {
    if t_max == 0 {
        return Err(MetricsError::ZeroHorizon);
    }
    mean(episodes.into_iter().map(|(len, ok)| if ok { len as f64 } else { t_max as f64 }))
}

fn mean(values: impl IntoIterator<Item = f64>) -> Result<f64, MetricsError> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(sum / n as f64)
}

pub fn success_rate(trajectories: &[Trajectory]) -> Result<f64, MetricsError> {
    mean(trajectories.iter().map(|t| if t.success { 100.0 } else { 0.0 }))
}

/// Percentage-point change of the in-domain rate.
pub fn id_delta(final_rate: f64, base_rate: f64) -> f64 {
    final_rate - base_rate
}

/// Percentage change relative to `before`.
pub fn rel_change(after: f64, before: f64) -> Result<f64, MetricsError> {
    if before == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (after - before) / before)
}

/// Relative change of summed out-of-domain rates.
pub fn ood_change(baseline: &BTreeMap<String, f64>, augmented: &BTreeMap<String, f64>) -> Result<f64, MetricsError> {
    let a: BTreeSet<&String> = baseline.keys().collect();
    let b: BTreeSet<&String> = augmented.keys().collect();
    if a != b {
        let diff: Vec<&str> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(MetricsError::KeyMismatch(diff.join(", ")));
    }
    let base: f64 = baseline.values().sum();
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    let delta: f64 = baseline.iter().map(|(k, v)| augmented[k] - v).sum();
    Ok(100.0 * delta / base)
}

/// One training domain's evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub train: String,
    /// Out-of-domain success rates keyed by eval domain.
    pub evals: BTreeMap<String, f64>,
    #[serde(default)]
    pub id_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub rows: Vec<ResultRow>,
}

impl ResultMatrix {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if !seen.insert(&row.train) {
                return Err(MetricsError::DuplicateCell(format!("row `{}` appears twice", row.train)));
            }
            if row.evals.contains_key(&row.train) {
                return Err(MetricsError::DuplicateCell(format!(
                    "({0}, {0}) is in-domain and belongs in id_rate",
                    row.train
                )));
            }
        }
        Ok(())
    }
}

/// Micro-percent fixed point.
pub fn to_fixed(rate: f64) -> i64 {
    (rate * 1e6).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub train: String,
    pub rate: f64,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainScore {
    pub per_eval_ranks: BTreeMap<String, u32>,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub columns: BTreeMap<String, Vec<RankedEntry>>,
    pub scores: BTreeMap<String, TrainScore>,
}

/// Ranks every eval column by out-of-domain rate, descending. Walking down a
/// column, an entry within `tie_threshold` of the entry just above it shares
/// that rank; otherwise the rank advances by one.
pub fn ood_ranking(matrix: &ResultMatrix, tie_threshold: f64) -> Result<Ranking, MetricsError> {
    matrix.validate()?;
    let threshold = to_fixed(tie_threshold);
    let mut cols: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for row in &matrix.rows {
        for (eval, rate) in &row.evals {
            cols.entry(eval).or_default().push((&row.train, *rate));
        }
    }
    let mut columns = BTreeMap::new();
    let mut scores: BTreeMap<String, TrainScore> = BTreeMap::new();
    for (eval, mut entries) in cols {
        if entries.len() < 2 {
            return Err(MetricsError::InsufficientEntries(eval.to_string()));
        }
        entries.sort_by(|a, b| to_fixed(b.1).cmp(&to_fixed(a.1)).then(a.0.cmp(b.0)));
        let mut ranked = Vec::with_capacity(entries.len());
        let mut prev: Option<(i64, u32)> = None;
        for (train, rate) in entries {
            let fixed = to_fixed(rate);
            let rank = match prev {
                None => 1,
                Some((p, r)) if (p - fixed).abs() < threshold => r,
                Some((_, r)) => r + 1,
            };
            prev = Some((fixed, rank));
            let entry = scores
                .entry(train.to_string())
                .or_insert_with(|| TrainScore { per_eval_ranks: BTreeMap::new(), score: 0 });
            entry.per_eval_ranks.insert(eval.to_string(), rank);
            entry.score += rank;
            ranked.push(RankedEntry { train: train.to_string(), rate, rank });
        }
        columns.insert(eval.to_string(), ranked);
    }
    Ok(Ranking { columns, scores })
}

impl Ranking {
    /// Aligned text table: one row per training domain, ranks per eval column.
    pub fn to_text(&self) -> String {
        let evals: Vec<&String> = self.columns.keys().collect();
        let width =
            self.scores.keys().chain(evals.iter().copied()).map(|s| s.len()).max().unwrap_or(5).max("train".len());
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "train");
        for e in &evals {
            let _ = write!(out, "  {e:>width$}");
        }
        let _ = writeln!(out, "  {:>5}", "score");
        for (train, s) in &self.scores {
            let _ = write!(out, "{train:<width$}");
            for e in &evals {
                let cell = s.per_eval_ranks.get(*e).map(|r| r.to_string()).unwrap_or_else(|| "-".into());
                let _ = write!(out, "  {cell:>width$}");
            }
            let _ = writeln!(out, "  {:>5}", s.score);
        }
        out
    }
}

/// Aggregates reported for a batch of rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub success_rate: f64,
    pub avg_char_count: f64,
    pub avg_traj_length: f64,
}

pub fn summarize(trajectories: &[Trajectory], t_max: u32) -> Result<Summary, MetricsError> {
    Ok(Summary {
        episodes: trajectories.len(),
        success_rate: success_rate(trajectories)?,
        avg_char_count: avg_char_count(trajectories)?,
        avg_traj_length: avg_traj_length(trajectories, t_max)?,
    })
}
