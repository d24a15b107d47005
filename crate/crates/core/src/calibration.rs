//! Split conformal intervals for agent-poll option probabilities.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{0}")]
    Domain(String),
    #[error("calibration pairs: {0}")]
    Csv(#[from] csv::Error),
}

/// One (community, question, option) with the agent-poll estimate and the
/// observed survey proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub community_id: String,
    pub question_id: String,
    pub option_id: String,
    pub y_hat: f64,
    pub y: f64,
}

fn unit(name: &str, v: f64) -> Result<(), CalibrationError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CalibrationError::Domain(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl CalibrationPair {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        unit("y_hat", self.y_hat)?;
        unit("y", self.y)
    }

    pub fn score(&self) -> f64 {
        (self.y - self.y_hat).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    /// Nonconformity scores, ascending.
    pub scores: Vec<f64>,
    pub n: usize,
    pub alpha: f64,
    /// `None` when too few scores exist for the requested coverage; such a
    /// model stands for an infinite threshold.
    pub q_hat: Option<f64>,
}

impl ConformalModel {
    pub fn threshold(&self) -> f64 {
        self.q_hat.unwrap_or(f64::INFINITY)
    }
}

/// Rank of the conformal quantile among n sorted scores.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    // Slack keeps products like 50 * 0.9 from rounding up a whole rank.
    ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize
}

fn check_alpha(alpha: f64) -> Result<(), CalibrationError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CalibrationError::Domain(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

pub fn calibrate_scores(mut scores: Vec<f64>, alpha: f64) -> Result<ConformalModel, CalibrationError> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(CalibrationError::Domain("no calibration pairs".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(CalibrationError::Domain(format!("invalid score {bad}")));
    }
    scores.sort_by(f64::total_cmp);
    let n = scores.len();
    let k = quantile_rank(n, alpha);
    let q_hat = (k <= n).then(|| scores[k - 1]);
    Ok(ConformalModel { scores, n, alpha, q_hat })
}

pub fn calibrate(pairs: &[CalibrationPair], alpha: f64) -> Result<ConformalModel, CalibrationError> {
    for p in pairs {
        p.validate()?;
    }
    calibrate_scores(pairs.iter().map(CalibrationPair::score).collect(), alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// `[y_hat - q_hat, y_hat + q_hat]` clipped to [0, 1].
pub fn predict_interval(model: &ConformalModel, y_hat: f64) -> Result<Interval, CalibrationError> {
    unit("y_hat", y_hat)?;
    Ok(match model.q_hat {
        None => Interval { lo: 0.0, hi: 1.0 },
        Some(q) => Interval { lo: (y_hat - q).max(0.0), hi: (y_hat + q).min(1.0) },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One threshold over all questions.
    #[default]
    Pooled,
    PerQuestion,
}

pub const POOLED_KEY: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedModel {
    pub grouping: Grouping,
    /// By question id, or [`POOLED_KEY`].
    pub models: BTreeMap<String, ConformalModel>,
}

impl GroupedModel {
    pub fn model_for(&self, question_id: &str) -> Option<&ConformalModel> {
        match self.grouping {
            Grouping::Pooled => self.models.get(POOLED_KEY),
            Grouping::PerQuestion => self.models.get(question_id),
        }
    }

    pub fn predict(&self, question_id: &str, y_hat: f64) -> Result<Interval, CalibrationError> {
        let m = self
            .model_for(question_id)
            .ok_or_else(|| CalibrationError::Domain(format!("no calibration data for {question_id}")))?;
        predict_interval(m, y_hat)
    }
}

pub fn calibrate_grouped(
    pairs: &[CalibrationPair],
    alpha: f64,
    grouping: Grouping,
) -> Result<GroupedModel, CalibrationError> {
    let mut models = BTreeMap::new();
    match grouping {
        Grouping::Pooled => {
            models.insert(POOLED_KEY.to_string(), calibrate(pairs, alpha)?);
        }
        Grouping::PerQuestion => {
            let mut groups: BTreeMap<&str, Vec<CalibrationPair>> = BTreeMap::new();
            for p in pairs {
                groups.entry(&p.question_id).or_default().push(p.clone());
            }
            if groups.is_empty() {
                return Err(CalibrationError::Domain("no calibration pairs".into()));
            }
            for (q, ps) in groups {
                models.insert(q.to_string(), calibrate(&ps, alpha)?);
            }
        }
    }
    Ok(GroupedModel { grouping, models })
}

/// Reads `community_id,question_id,option_id,y_hat,y` rows with a header.
pub fn read_pairs_csv(path: &Path) -> Result<Vec<CalibrationPair>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let p: CalibrationPair = row?;
        p.validate().map_err(|e| CalibrationError::Domain(format!("{} row {}: {e}", path.display(), i + 2)))?;
        out.push(p);
    }
    Ok(out)
}

/// Estimator error added to the true probability before clipping to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Gaussian { sd: f64 },
    Uniform { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub alpha: f64,
    pub n_cal: usize,
    pub trials: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub coverage: f64,
    pub trials: usize,
    /// `1 - alpha` less three binomial standard errors.
    pub lower_bound: f64,
    /// Trials whose threshold was the infinite sentinel.
    pub vacuous: usize,
}

impl CoverageResult {
    pub fn meets_bound(&self) -> bool {
        self.coverage >= self.lower_bound
    }
}

fn draw_pair(rng: &mut ChaCha8Rng, noise: NoiseModel) -> (f64, f64) {
    let y: f64 = rng.random();
    let e = match noise {
        NoiseModel::None => 0.0,
        NoiseModel::Gaussian { sd } => Normal::new(0.0, sd).expect("sd is finite and nonnegative").sample(rng),
        NoiseModel::Uniform { half_width } => rng.random_range(-half_width..=half_width),
    };
    ((y + e).clamp(0.0, 1.0), y)
}

/// Repeats calibrate-then-predict on fresh exchangeable pairs (uniform true
/// probabilities, noisy estimates) and reports how often the interval
/// contains the held-out truth.
pub fn coverage_simulation(cfg: &CoverageConfig) -> Result<CoverageResult, CalibrationError> {
    check_alpha(cfg.alpha)?;
    if cfg.n_cal == 0 || cfg.trials == 0 {
        return Err(CalibrationError::Domain("n_cal and trials must be positive".into()));
    }
    match cfg.noise {
        NoiseModel::Gaussian { sd } if !(sd >= 0.0 && sd.is_finite()) => {
            return Err(CalibrationError::Domain(format!("noise sd {sd} is invalid")))
        }
        NoiseModel::Uniform { half_width } if !(half_width >= 0.0 && half_width.is_finite()) => {
            return Err(CalibrationError::Domain(format!("noise half width {half_width} is invalid")))
        }
        _ => {}
    }
    let (hits, vacuous) = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let scores: Vec<f64> = (0..cfg.n_cal)
                .map(|_| {
                    let (y_hat, y) = draw_pair(&mut rng, cfg.noise);
                    (y - y_hat).abs()
                })
                .collect();
            let model = calibrate_scores(scores, cfg.alpha).expect("validated inputs");
            let (y_hat, y) = draw_pair(&mut rng, cfg.noise);
            let hit = predict_interval(&model, y_hat).expect("y_hat is clipped").contains(y);
            (hit as usize, model.q_hat.is_none() as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = cfg.trials as f64;
    Ok(CoverageResult {
        coverage: hits as f64 / n,
        trials: cfg.trials,
        lower_bound: 1.0 - cfg.alpha - 3.0 * (cfg.alpha * (1.0 - cfg.alpha) / n).sqrt(),
        vacuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_guards_float_error() {
        assert_eq!(quantile_rank(49, 0.1), 45);
        assert_eq!(quantile_rank(3, 0.25), 3);
        assert_eq!(quantile_rank(3, 0.05), 4);
        assert_eq!(quantile_rank(19, 0.05), 19);
        assert_eq!(quantile_rank(99, 0.1), 90);
    }
}
