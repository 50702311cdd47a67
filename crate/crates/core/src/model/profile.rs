use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Shape of the malware/bonware impact over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImpactKind {
    Constant,
    PiecewiseConstant,
    Linear,
    PiecewiseLinear,
}

impl ImpactKind {
    fn is_linear(self) -> bool {
        matches!(self, ImpactKind::Linear | ImpactKind::PiecewiseLinear)
    }

    fn is_piecewise(self) -> bool {
        matches!(self, ImpactKind::PiecewiseConstant | ImpactKind::PiecewiseLinear)
    }
}

/// Linear impacts on one interval, in time `s` since the interval start:
/// malware `nu - mu * s`, bonware `alpha - beta * s`, each clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearImpact {
    pub nu: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LinearImpact {
    pub fn new(nu: f64, mu: f64, alpha: f64, beta: f64) -> Self {
        Self { nu, mu, alpha, beta }
    }

    pub fn malware_at(&self, s: f64) -> f64 {
        (self.nu - self.mu * s).max(0.0)
    }

    pub fn bonware_at(&self, s: f64) -> f64 {
        (self.alpha - self.beta * s).max(0.0)
    }

    /// Combined rate at the interval start, `alpha + nu`.
    pub fn lambda(&self) -> f64 {
        self.alpha + self.nu
    }

    /// Combined rate slope, `beta + mu`.
    pub fn omega(&self) -> f64 {
        self.beta + self.mu
    }

    /// Coefficients re-based to start at offset `s`.
    pub(crate) fn shifted(&self, s: f64) -> Self {
        Self {
            nu: self.nu - self.mu * s,
            mu: self.mu,
            alpha: self.alpha - self.beta * s,
            beta: self.beta,
        }
    }

    fn is_finite(&self) -> bool {
        self.nu.is_finite() && self.mu.is_finite() && self.alpha.is_finite() && self.beta.is_finite()
    }
}

/// Impacts on one interval of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalImpact {
    Constant {
        #[serde(rename = "M")]
        malware: f64,
        #[serde(rename = "B")]
        bonware: f64,
    },
    Linear(LinearImpact),
}

impl IntervalImpact {
    pub fn constant(malware: f64, bonware: f64) -> Self {
        IntervalImpact::Constant { malware, bonware }
    }

    pub fn malware_at(&self, s: f64) -> f64 {
        match self {
            IntervalImpact::Constant { malware, .. } => *malware,
            IntervalImpact::Linear(l) => l.malware_at(s),
        }
    }

    pub fn bonware_at(&self, s: f64) -> f64 {
        match self {
            IntervalImpact::Constant { bonware, .. } => *bonware,
            IntervalImpact::Linear(l) => l.bonware_at(s),
        }
    }
}

/// Time-dependent malware and bonware impacts over a partition of time.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactProfile {
    kind: ImpactKind,
    knots: Vec<f64>,
    intervals: Vec<IntervalImpact>,
}

impl ImpactProfile {
    pub fn new(kind: ImpactKind, knots: Vec<f64>, intervals: Vec<IntervalImpact>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidProfile("at least one interval is required".into()));
        }
        if knots.len() != intervals.len() + 1 {
            return Err(Error::InvalidProfile(format!(
                "{} intervals need {} knots, got {}",
                intervals.len(),
                intervals.len() + 1,
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile(format!(
                "knots must be finite and strictly increasing: {knots:?}"
            )));
        }
        if !kind.is_piecewise() && intervals.len() != 1 {
            return Err(Error::InvalidProfile(format!(
                "{kind:?} profiles have exactly one interval"
            )));
        }
        for (j, iv) in intervals.iter().enumerate() {
            match (iv, kind.is_linear()) {
                (IntervalImpact::Constant { malware, bonware }, false) => {
                    if !(malware.is_finite() && bonware.is_finite() && *malware >= 0.0 && *bonware >= 0.0) {
                        return Err(Error::InvalidProfile(format!(
                            "interval {j}: impacts must be finite and nonnegative (M = {malware}, B = {bonware})"
                        )));
                    }
                }
                (IntervalImpact::Linear(l), true) => {
                    if !l.is_finite() {
                        return Err(Error::UnsupportedCoefficients(format!(
                            "interval {j}: non-finite linear coefficients {l:?}"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidProfile(format!(
                        "interval {j} does not match profile kind {kind:?}"
                    )))
                }
            }
        }
        Ok(Self {
            kind,
            knots,
            intervals,
        })
    }

    pub fn constant(start: f64, end: f64, malware: f64, bonware: f64) -> Result<Self> {
        Self::new(
            ImpactKind::Constant,
            vec![start, end],
            vec![IntervalImpact::constant(malware, bonware)],
        )
    }

    /// `impacts[j] = (M_j, B_j)` on `[knots[j], knots[j + 1]]`.
    pub fn piecewise_constant(knots: Vec<f64>, impacts: &[(f64, f64)]) -> Result<Self> {
        let intervals = impacts
            .iter()
            .map(|&(m, b)| IntervalImpact::constant(m, b))
            .collect();
        Self::new(ImpactKind::PiecewiseConstant, knots, intervals)
    }

    pub fn linear(start: f64, end: f64, coeffs: LinearImpact) -> Result<Self> {
        Self::new(
            ImpactKind::Linear,
            vec![start, end],
            vec![IntervalImpact::Linear(coeffs)],
        )
    }

    pub fn piecewise_linear(knots: Vec<f64>, coeffs: &[LinearImpact]) -> Result<Self> {
        let intervals = coeffs.iter().copied().map(IntervalImpact::Linear).collect();
        Self::new(ImpactKind::PiecewiseLinear, knots, intervals)
    }

    pub fn kind(&self) -> ImpactKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn intervals(&self) -> &[IntervalImpact] {
        &self.intervals
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn is_linear(&self) -> bool {
        self.kind.is_linear()
    }

    fn slack(&self) -> f64 {
        1e-9 * (self.end() - self.start()).max(1.0)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < self.start() - self.slack() || t > self.end() + self.slack() {
            return Err(Error::Range {
                from: t,
                to: t,
                start: self.start(),
                end: self.end(),
            });
        }
        Ok(())
    }

    /// Interval containing `t`, using `t_j <= t < t_{j+1}` and closing the
    /// last interval on the right.
    pub fn interval_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let idx = self.knots.partition_point(|&k| k <= t);
        Ok(idx.saturating_sub(1).min(self.intervals.len() - 1))
    }

    pub fn malware(&self, t: f64) -> Result<f64> {
        let j = self.interval_index(t)?;
        Ok(self.intervals[j].malware_at(t - self.knots[j]))
    }

    pub fn bonware(&self, t: f64) -> Result<f64> {
        let j = self.interval_index(t)?;
        Ok(self.intervals[j].bonware_at(t - self.knots[j]))
    }

    /// Single-interval profile for interval `j`.
    pub fn interval(&self, j: usize) -> Result<ImpactProfile> {
        let iv = *self
            .intervals
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("no interval {j}")))?;
        let kind = if self.is_linear() {
            ImpactKind::Linear
        } else {
            ImpactKind::Constant
        };
        Self::new(kind, vec![self.knots[j], self.knots[j + 1]], vec![iv])
    }
}
