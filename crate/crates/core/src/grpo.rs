//! Group-relative advantages and the clipped surrogate objective, evaluated
//! over logged trajectories with externally supplied log-probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group needs at least 2 trajectories, got {0}")]
    GroupTooSmall(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub clip_range: f64,
    pub kl_coeff: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { clip_range: 0.2, kl_coeff: 0.01, std_floor: DEFAULT_STD_FLOOR }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.clip_range.is_nan() || self.clip_range <= 0.0 {
            return Err(GrpoError::InvalidConfig(format!("clip_range must be > 0, got {}", self.clip_range)));
        }
        if [self.kl_coeff, self.std_floor].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(GrpoError::InvalidConfig("kl_coeff and std_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Returns and per-action log-probabilities for one prompt's group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub returns: Vec<f64>,
    pub logp_current: Vec<Vec<f64>>,
    pub logp_old: Vec<Vec<f64>>,
    pub logp_ref: Vec<Vec<f64>>,
}

impl GroupBatch {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let n = self.returns.len();
        if n < 2 {
            return Err(GrpoError::GroupTooSmall(n));
        }
        for (name, lists) in
            [("logp_current", &self.logp_current), ("logp_old", &self.logp_old), ("logp_ref", &self.logp_ref)]
        {
            if lists.len() != n {
                return Err(GrpoError::LengthMismatch(format!(
                    "{name} has {} trajectories, returns has {n}",
                    lists.len()
                )));
            }
        }
        for i in 0..n {
            let t = self.logp_current[i].len();
            if self.logp_old[i].len() != t || self.logp_ref[i].len() != t {
                return Err(GrpoError::LengthMismatch(format!("trajectory {i} log-prob lists differ in length")));
            }
        }
        Ok(())
    }
}

/// `(R_i - mean) / std` with the population std; all zeros below `std_floor`.
///
/// The result is recentred so that it sums to exactly `0.0` in floating
/// point, whatever the summation order; see [`center_exactly`].
pub fn group_advantages(returns: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    let n = returns.len();
    if n < 2 {
        return Err(GrpoError::GroupTooSmall(n));
    }
    // summing in sorted order makes the result independent of member order
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut sq: Vec<f64> = sorted.iter().map(|r| (r - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    let std = (sq.iter().sum::<f64>() / n as f64).sqrt();
    if std < std_floor || std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut adv: Vec<f64> = returns.iter().map(|r| (r - mean) / std).collect();
    center_exactly(&mut adv);
    Ok(adv)
}

/// Snaps `values` onto a power-of-two grid coarse enough that every partial
/// sum is exactly representable, then shifts whole tie classes by a few grid
/// steps so the total is exactly zero. Equal inputs stay equal. Each value
/// moves by at most a few multiples of `2^-52 * n * max|v|`.
pub fn center_exactly(values: &mut [f64]) {
    let n = values.len();
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 || max_abs == 0.0 || !max_abs.is_finite() {
        return;
    }
    // max|v| < 2^top and n <= 2^spread, so all partial sums stay below 2^52 steps
    let top = max_abs.log2().floor() as i32 + 1;
    let spread = (usize::BITS - (n - 1).leading_zeros()) as i32;
    let step = 2f64.powi(top + spread - 52);
    let mut units: Vec<i64> = values.iter().map(|v| (v / step).round() as i64).collect();

    let mut classes: std::collections::BTreeMap<i64, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, u) in units.iter().enumerate() {
        classes.entry(*u).or_default().push(i);
    }
    let excess: i128 = units.iter().map(|&u| u as i128).sum();
    if excess != 0 {
        let members: Vec<&Vec<usize>> = classes.values().collect();
        let sizes: Vec<i128> = members.iter().map(|m| m.len() as i128).collect();
        for (m, d) in members.iter().zip(shifts(&sizes, -excess)) {
            for &i in m.iter() {
                units[i] += d as i64;
            }
        }
    }
    for (v, u) in values.iter_mut().zip(units) {
        *v = u as f64 * step;
    }
}

/// Integer shifts `d` with `sum(sizes[k] * d[k]) == target`. `target` must
/// be a multiple of the gcd of `sizes`, which holds when it is a sum of
/// per-class multiples.
fn shifts(sizes: &[i128], target: i128) -> Vec<i128> {
    let mut d = vec![0; sizes.len()];
    // one class alone, preferring the largest so the shift is smallest
    if let Some(k) = (0..sizes.len()).filter(|&k| target % sizes[k] == 0).max_by_key(|&k| sizes[k]) {
        d[k] = target / sizes[k];
        return d;
    }
    // otherwise Bezout coefficients for the gcd, scaled up
    let mut g = sizes[0];
    d[0] = 1;
    for k in 1..sizes.len() {
        let (g2, x, y) = ext_gcd(g, sizes[k]);
        for c in d.iter_mut().take(k) {
            *c *= x;
        }
        d[k] = y;
        g = g2;
    }
    let scale = target / g;
    d.iter_mut().for_each(|c| *c *= scale);
    d
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// `exp(logp_current - logp_old)` per action.
pub fn importance_ratios(logp_current: &[f64], logp_old: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if logp_current.len() != logp_old.len() {
        return Err(GrpoError::LengthMismatch(format!("{} current vs {} old", logp_current.len(), logp_old.len())));
    }
    Ok(logp_current.iter().zip(logp_old).map(|(c, o)| (c - o).exp()).collect())
}

/// `min(rho * A, clamp(rho, 1 - clip, 1 + clip) * A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_range: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range);
    (ratio * advantage).min(clipped * advantage)
}

/// Per-action estimate `exp(r - c) - (r - c) - 1`, always >= 0.
pub fn kl_term(logp_ref: f64, logp_current: f64) -> f64 {
    let d = logp_ref - logp_current;
    if d == 0.0 {
        return 0.0;
    }
    let v = if d.abs() < 1e-4 {
        // series form; the direct form cancels to zero for tiny d
        d * d * (0.5 + d * (1.0 / 6.0 + d / 24.0))
    } else {
        d.exp_m1() - d
    };
    // strictly positive whenever the inputs differ, even if d * d underflows
    v.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub advantages: Vec<f64>,
    pub per_action_terms: Vec<Vec<f64>>,
    pub kl: f64,
    pub objective: f64,
}

/// Each trajectory contributes its mean per-action term; the objective
/// averages those over the group and subtracts `kl_coeff * kl`, where `kl`
/// is the mean estimator value over every action in the batch.
pub fn clipped_surrogate(batch: &GroupBatch, cfg: &GrpoConfig) -> Result<SurrogateReport, GrpoError> {
    cfg.validate()?;
    batch.validate()?;
    let advantages = group_advantages(&batch.returns, cfg.std_floor)?;
    let n = batch.returns.len();
    let mut per_action_terms = Vec::with_capacity(n);
    let mut surrogate = 0.0;
    let (mut kl_sum, mut actions) = (0.0, 0usize);
    for (i, &advantage) in advantages.iter().enumerate() {
        let ratios = importance_ratios(&batch.logp_current[i], &batch.logp_old[i])?;
        let terms: Vec<f64> = ratios.iter().map(|&rho| clipped_term(rho, advantage, cfg.clip_range)).collect();
        if !terms.is_empty() {
            surrogate += terms.iter().sum::<f64>() / terms.len() as f64;
        }
        for (r, c) in batch.logp_ref[i].iter().zip(&batch.logp_current[i]) {
            kl_sum += kl_term(*r, *c);
            actions += 1;
        }
        per_action_terms.push(terms);
    }
    let kl = if actions == 0 { 0.0 } else { kl_sum / actions as f64 };
    let objective = surrogate / n as f64 - cfg.kl_coeff * kl;
    Ok(SurrogateReport { advantages, per_action_terms, kl, objective })
}

/// JSON input of the `grpo-check` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckInput {
    pub returns: Vec<f64>,
    pub logp_current: Vec<Vec<f64>>,
    pub logp_old: Vec<Vec<f64>>,
    pub logp_ref: Vec<Vec<f64>>,
    pub clip_range: f64,
    pub beta: f64,
    #[serde(default = "default_floor")]
    pub std_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_STD_FLOOR
}

impl CheckInput {
    pub fn run(&self) -> Result<SurrogateReport, GrpoError> {
        let batch = GroupBatch {
            returns: self.returns.clone(),
            logp_current: self.logp_current.clone(),
            logp_old: self.logp_old.clone(),
            logp_ref: self.logp_ref.clone(),
        };
        clipped_surrogate(
            &batch,
            &GrpoConfig { clip_range: self.clip_range, kl_coeff: self.beta, std_floor: self.std_floor },
        )
    }
}
