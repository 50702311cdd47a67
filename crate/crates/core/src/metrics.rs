//! Area-based resilience measures and their uncertainty.

use crate::error::{Error, Result};
use crate::numerics::{neumaier_sum, trapezoid, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Time-averaged functionality over `[t0, t_end]`.
pub fn auc(series: &TimeSeries, t0: f64, t_end: f64) -> Result<f64> {
    Ok(trapezoid(series, t0, t_end)? / (t_end - t0))
}

/// Accomplishment under attack divided by baseline accomplishment.
pub fn resilience_r(attack: &TimeSeries, baseline: &TimeSeries, t0: f64, t_end: f64) -> Result<f64> {
    let denom = trapezoid(baseline, t0, t_end)?;
    let num = trapezoid(attack, t0, t_end)?;
    if !(denom > 0.0) {
        return Err(Error::DegenerateBaseline(format!(
            "baseline area over [{t0}, {t_end}] is {denom}"
        )));
    }
    Ok(num / denom)
}

/// Exact resilience of the constant-impact model started at `F_N` over
/// `[0, horizon]`: `B/Q + (M/Q^2) (1 - e^{-Q T}) / T`.
pub fn constant_model_resilience(m: f64, b: f64, horizon: f64) -> Result<f64> {
    if !(m >= 0.0 && b >= 0.0 && m.is_finite() && b.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need M, B >= 0 and a positive horizon (got {m}, {b}, {horizon})"
        )));
    }
    let q = m + b;
    if q == 0.0 {
        return Ok(1.0);
    }
    let x = q * horizon;
    Ok(b / q + (m / q) * (-(-x).exp_m1() / x))
}

/// Utilities of several objectives, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, f64)>", into = "Vec<(String, f64)>")]
pub struct UtilityWeights {
    entries: Vec<(String, f64)>,
}

impl UtilityWeights {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidWeights("no objectives given".into()));
        }
        for (name, u) in &entries {
            if !(u.is_finite() && *u >= 0.0) {
                return Err(Error::InvalidWeights(format!("weight for {name} is {u}")));
            }
        }
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidWeights(format!("objective {name} listed twice")));
            }
        }
        let total = neumaier_sum(entries.iter().map(|e| e.1));
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { entries })
    }

    /// Equal weights over the named objectives.
    pub fn uniform<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let u = 1.0 / names.len().max(1) as f64;
        Self::new(names.iter().map(|n| (n.as_ref().to_string(), u)).collect())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

impl TryFrom<Vec<(String, f64)>> for UtilityWeights {
    type Error = Error;

    fn try_from(entries: Vec<(String, f64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<UtilityWeights> for Vec<(String, f64)> {
    fn from(w: UtilityWeights) -> Self {
        w.entries
    }
}

/// Utility-weighted mean of per-objective resilience values.
pub fn weighted_resilience(values: &[(String, f64)], weights: &UtilityWeights) -> Result<f64> {
    let terms = weights
        .entries
        .iter()
        .map(|(name, u)| {
            values
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, r)| u * r)
                .ok_or_else(|| Error::Mismatch(format!("no resilience value for objective {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(neumaier_sum(terms))
}

/// Pointwise `attack / baseline` on a shared grid. Values above one are kept.
pub fn ratio_curve(attack: &TimeSeries, baseline: &TimeSeries) -> Result<TimeSeries> {
    if let Some(k) = baseline.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateBaseline(format!(
            "baseline sample {k} at t = {} is {}",
            baseline.time(k),
            baseline.values()[k]
        )));
    }
    attack.zip_with(baseline, |a, b| a / b)
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci(values: &[f64], confidence: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    bootstrap_statistic(values.len(), confidence, resamples, seed, |idx| {
        Ok(neumaier_sum(idx.iter().map(|&i| values[i])) / idx.len() as f64)
    })
}

/// Percentile bootstrap interval for an arbitrary statistic of `n` units.
/// `statistic` receives the resampled unit indices.
pub fn bootstrap_statistic<S>(
    n: usize,
    confidence: f64,
    resamples: usize,
    seed: u64,
    mut statistic: S,
) -> Result<(f64, f64)>
where
    S: FnMut(&[usize]) -> Result<f64>,
{
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(confidence > 0.0 && confidence < 1.0) || resamples == 0 {
        return Err(Error::InvalidArgument(format!(
            "confidence must be in (0, 1) and resamples positive (got {confidence}, {resamples})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        stats.push(statistic(&idx)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    Ok((quantile(&stats, tail), quantile(&stats, 1.0 - tail)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Analysis window `[t0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

impl Window {
    pub fn new(t0: f64, t_end: f64) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidArgument(format!("window needs t0 < T, got [{t0}, {t_end}]")));
        }
        Ok(Self { t0, t_end })
    }
}

/// A resilience estimate with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceValue {
    #[serde(rename = "R")]
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
    pub window: Window,
}

impl ResilienceValue {
    /// Widens the interval if needed so it contains the point estimate.
    pub fn new(r: f64, ci: (f64, f64), n_runs: usize, window: Window) -> Result<Self> {
        if !r.is_finite() || n_runs == 0 {
            return Err(Error::InvalidArgument(format!("R = {r} from {n_runs} runs")));
        }
        Ok(Self {
            r,
            ci_low: ci.0.min(r),
            ci_high: ci.1.max(r),
            n_runs,
            window,
        })
    }

    /// A single-run value with a degenerate interval.
    pub fn point(r: f64, window: Window) -> Result<Self> {
        Self::new(r, (r, r), 1, window)
    }
}
