//! Functionality under malware and bonware impacts.
//!
//! Functionality `F` obeys `dF/dt = B(t) (F_N - F) - M(t) F`. Every impact
//! shape supported here has an exact solution, which the evaluators use.

mod profile;
mod solve;

pub use profile::{ImpactKind, ImpactProfile, IntervalImpact, LinearImpact};

pub(crate) use solve::advance_constant;

use crate::error::{Error, Result};
use crate::numerics::TimeSeries;
use serde::{Deserialize, Serialize};

/// Normal functionality, initial functionality and start time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelState {
    f_nominal: f64,
    f_initial: f64,
    t0: f64,
}

impl ModelState {
    pub fn new(f_nominal: f64, f_initial: f64, t0: f64) -> Result<Self> {
        if !(f_nominal.is_finite() && f_nominal > 0.0) {
            return Err(Error::Domain(format!("F_N must be positive, got {f_nominal}")));
        }
        if !(f_initial.is_finite() && f_initial > 0.0 && f_initial <= f_nominal) {
            return Err(Error::Domain(format!(
                "F0 must lie in (0, F_N = {f_nominal}], got {f_initial}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Domain(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self {
            f_nominal,
            f_initial,
            t0,
        })
    }

    /// `F_N = F0 = 1` starting at `t0`.
    pub fn normalized(t0: f64) -> Result<Self> {
        Self::new(1.0, 1.0, t0)
    }

    pub fn f_nominal(&self) -> f64 {
        self.f_nominal
    }

    pub fn f_initial(&self) -> f64 {
        self.f_initial
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
}

fn check_impacts(m: f64, b: f64) -> Result<()> {
    if !(m.is_finite() && b.is_finite() && m >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!(
            "impacts must be finite and nonnegative, got M = {m}, B = {b}"
        )));
    }
    Ok(())
}

fn check_elapsed(state: &ModelState, t: f64) -> Result<f64> {
    let s = t - state.t0;
    if !t.is_finite() || s < -1e-9 * state.t0.abs().max(1.0) {
        return Err(Error::Range {
            from: t,
            to: t,
            start: state.t0,
            end: f64::INFINITY,
        });
    }
    Ok(s.max(0.0))
}

/// Constant impacts `M`, `B` from `state.t0` to `t`.
pub fn eval_constant(state: &ModelState, m: f64, b: f64, t: f64) -> Result<f64> {
    check_impacts(m, b)?;
    let s = check_elapsed(state, t)?;
    Ok(advance_constant(state.f_nominal, state.f_initial, m, b, s))
}

/// Level approached under constant impacts: `F_N B / (M + B)`.
pub fn steady_state(state: &ModelState, m: f64, b: f64) -> Result<f64> {
    check_impacts(m, b)?;
    if m + b == 0.0 {
        return Err(Error::UndefinedSteadyState);
    }
    Ok(state.f_nominal * b / (m + b))
}

/// Linear impacts `M = nu - mu s`, `B = alpha - beta s` with `s = t - t0`,
/// each clamped at zero, over an unbounded horizon.
pub fn eval_linear(state: &ModelState, coeffs: LinearImpact, t: f64) -> Result<f64> {
    if ![coeffs.nu, coeffs.mu, coeffs.alpha, coeffs.beta]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::UnsupportedCoefficients(format!(
            "non-finite linear coefficients {coeffs:?}"
        )));
    }
    let s = check_elapsed(state, t)?;
    Ok(solve::advance_linear_clamped(
        state.f_nominal,
        state.f_initial,
        &coeffs,
        s,
    ))
}

fn require_kind(profile: &ImpactProfile, allowed: &[ImpactKind]) -> Result<()> {
    if !allowed.contains(&profile.kind()) {
        return Err(Error::InvalidProfile(format!(
            "expected one of {allowed:?}, got {:?}",
            profile.kind()
        )));
    }
    Ok(())
}

/// Piecewise-constant impacts with `F` chained across knots.
pub fn eval_piecewise_constant(state: &ModelState, profile: &ImpactProfile, t: f64) -> Result<f64> {
    require_kind(profile, &[ImpactKind::PiecewiseConstant, ImpactKind::Constant])?;
    Curve::new(state, profile)?.at(t)
}

/// Piecewise-linear impacts with `F` chained across knots.
pub fn eval_piecewise_linear(state: &ModelState, profile: &ImpactProfile, t: f64) -> Result<f64> {
    require_kind(profile, &[ImpactKind::PiecewiseLinear, ImpactKind::Linear])?;
    Curve::new(state, profile)?.at(t)
}

/// Any profile kind.
pub fn evaluate(state: &ModelState, profile: &ImpactProfile, t: f64) -> Result<f64> {
    Curve::new(state, profile)?.at(t)
}

/// Right-hand side `B(t) (F_N - F) - M(t) F`.
pub fn governing_derivative(state: &ModelState, profile: &ImpactProfile, t: f64, f: f64) -> Result<f64> {
    let m = profile.malware(t)?;
    let b = profile.bonware(t)?;
    Ok(b * (state.f_nominal - f) - m * f)
}

/// Samples the solution on the profile's span with period `dt`. The final
/// sample falls on the last grid point not beyond the span end; when `dt`
/// exceeds the span the two endpoints are returned.
pub fn sample_curve(state: &ModelState, profile: &ImpactProfile, dt: f64) -> Result<TimeSeries> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let curve = Curve::new(state, profile)?;
    let span = profile.end() - profile.start();
    if dt >= span {
        let values = vec![curve.at(profile.start())?, curve.at(profile.end())?];
        return TimeSeries::new(profile.start(), span, values);
    }
    let ratio = span / dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.floor()
    } as usize;
    let start = profile.start();
    let values = (0..=steps)
        .map(|k| curve.at((start + k as f64 * dt).min(profile.end())))
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(start, dt, values)
}

/// Closed-form curve with functionality precomputed at every knot.
#[derive(Debug, Clone)]
pub struct Curve<'a> {
    state: ModelState,
    profile: &'a ImpactProfile,
    knot_values: Vec<f64>,
}

impl<'a> Curve<'a> {
    pub fn new(state: &ModelState, profile: &'a ImpactProfile) -> Result<Self> {
        let slack = 1e-9 * (profile.end() - profile.start()).max(1.0);
        if (state.t0 - profile.start()).abs() > slack {
            return Err(Error::InvalidArgument(format!(
                "state starts at {} but the profile starts at {}",
                state.t0,
                profile.start()
            )));
        }
        let knots = profile.knots();
        let mut knot_values = Vec::with_capacity(knots.len());
        let mut f = state.f_initial;
        knot_values.push(f);
        for (j, iv) in profile.intervals().iter().enumerate() {
            f = advance(state.f_nominal, f, iv, knots[j + 1] - knots[j]);
            knot_values.push(f);
        }
        Ok(Self {
            state: *state,
            profile,
            knot_values,
        })
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        let j = self.profile.interval_index(t)?;
        let s = (t - self.profile.knots()[j]).max(0.0);
        let iv = &self.profile.intervals()[j];
        Ok(advance(self.state.f_nominal, self.knot_values[j], iv, s))
    }

    /// Functionality at each knot.
    pub fn knot_values(&self) -> &[f64] {
        &self.knot_values
    }
}

fn advance(f_n: f64, f0: f64, iv: &IntervalImpact, s: f64) -> f64 {
    match iv {
        IntervalImpact::Constant { malware, bonware } => advance_constant(f_n, f0, *malware, *bonware, s),
        IntervalImpact::Linear(c) => solve::advance_linear_clamped(f_n, f0, c, s),
    }
}

/// JSON form of a profile together with its initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub kind: ImpactKind,
    pub knots: Vec<f64>,
    pub intervals: Vec<IntervalImpact>,
    #[serde(rename = "F_N")]
    pub f_nominal: f64,
    #[serde(rename = "F0")]
    pub f_initial: f64,
    pub t0: f64,
}

impl ProfileDocument {
    pub fn from_parts(state: &ModelState, profile: &ImpactProfile) -> Self {
        Self {
            kind: profile.kind(),
            knots: profile.knots().to_vec(),
            intervals: profile.intervals().to_vec(),
            f_nominal: state.f_nominal,
            f_initial: state.f_initial,
            t0: state.t0,
        }
    }

    pub fn into_parts(self) -> Result<(ModelState, ImpactProfile)> {
        let state = ModelState::new(self.f_nominal, self.f_initial, self.t0)?;
        let profile = ImpactProfile::new(self.kind, self.knots, self.intervals)?;
        Ok((state, profile))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))
    }
}
