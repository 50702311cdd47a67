//! Piecewise-constant impact parameters from an attack/baseline ratio curve.

mod fast;
mod refine;
mod switch;
mod window;

pub use fast::{fast_fit_phase1, fast_fit_phase2};
pub use refine::refine_least_squares;
pub use switch::{detect_switch_time, FLATNESS_FRACTION};
pub use window::detect_attack_window;

use crate::error::{Error, Result};
use crate::model::{advance_constant, ImpactProfile, ModelState};
use crate::numerics::{neumaier_sum, TimeSeries, Tolerance};
use serde::{Deserialize, Serialize};

/// Upper end of the rate bracket searched by the solvers.
pub const Q_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastFitHyperparams {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub zeta: f64,
    /// Seconds a drop must last to count as an attack.
    pub min_window: f64,
}

impl Default for FastFitHyperparams {
    fn default() -> Self {
        Self {
            alpha: 1.0 - (-1.0f64).exp(),
            alpha_tilde: 1.0 - (-4.0f64).exp(),
            zeta: 0.95,
            min_window: 11.0,
        }
    }
}

impl FastFitHyperparams {
    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.alpha) || !open(self.alpha_tilde) || !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < alpha, alpha_tilde < 1 and 0 < zeta <= 1, got {self:?}"
            )));
        }
        if !(self.min_window >= 0.0 && self.min_window.is_finite()) {
            return Err(Error::InvalidArgument(format!("min_window is {}", self.min_window)));
        }
        Ok(())
    }
}

/// Impacts of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub malware: f64,
    pub bonware: f64,
    /// Set when the data show no decline and both impacts are zero.
    pub degenerate: bool,
}

impl PhaseEstimate {
    pub fn new(malware: f64, bonware: f64) -> Self {
        Self {
            malware,
            bonware,
            degenerate: false,
        }
    }

    pub fn degenerate() -> Self {
        Self {
            malware: 0.0,
            bonware: 0.0,
            degenerate: true,
        }
    }

    pub fn rate(&self) -> f64 {
        self.malware + self.bonware
    }

    /// `B / (M + B)`, zero when both vanish.
    pub fn share(&self) -> f64 {
        let q = self.rate();
        if q > 0.0 {
            self.bonware / q
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub t_from: f64,
    pub t_to: f64,
    #[serde(rename = "M")]
    pub malware: f64,
    #[serde(rename = "B")]
    pub bonware: f64,
}

impl Phase {
    /// `B / (M + B)`, zero when both vanish.
    pub fn equilibrium_share(&self) -> f64 {
        PhaseEstimate::new(self.malware, self.bonware).share()
    }
}

/// Fitted model: functionality holds at `f_initial` until `t1`, then follows
/// constant impacts per phase, chained across phase boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFit {
    pub t_star: f64,
    pub m: f64,
    pub phases: Vec<Phase>,
    pub t1: f64,
    pub t2: f64,
    pub rmse: f64,
    #[serde(rename = "F_N")]
    pub f_nominal: f64,
    #[serde(rename = "F0")]
    pub f_initial: f64,
    pub refined: bool,
    pub degenerate: bool,
}

impl PiecewiseConstantFit {
    /// Model value at `t`; times after the last phase continue its dynamics.
    pub fn evaluate(&self, t: f64) -> f64 {
        let mut f = self.f_initial;
        for p in &self.phases {
            if t <= p.t_from {
                return f;
            }
            let s = (t.min(p.t_to) - p.t_from).max(0.0);
            f = advance_constant(self.f_nominal, f, p.malware, p.bonware, s);
            if t <= p.t_to {
                return f;
            }
        }
        f
    }

    /// Model sampled on the grid of `like`.
    pub fn model_curve(&self, like: &TimeSeries) -> Result<TimeSeries> {
        TimeSeries::from_fn(like.t0(), like.dt(), like.len(), |t| self.evaluate(t))
    }

    /// Root-mean-square deviation from `curve`.
    pub fn rmse_against(&self, curve: &TimeSeries) -> f64 {
        let sq = curve
            .times()
            .zip(curve.values())
            .map(|(t, y)| (self.evaluate(t) - y).powi(2));
        (neumaier_sum(sq) / curve.len() as f64).sqrt()
    }

    /// The phases as an impact profile on `[t1, end]`, with its start state.
    pub fn profile(&self) -> Result<(ModelState, ImpactProfile)> {
        let mut knots = vec![self.phases[0].t_from];
        knots.extend(self.phases.iter().map(|p| p.t_to));
        let impacts: Vec<_> = self.phases.iter().map(|p| (p.malware, p.bonware)).collect();
        let state = ModelState::new(self.f_nominal, self.f_initial, knots[0])?;
        Ok((state, ImpactProfile::piecewise_constant(knots, &impacts)?))
    }

    fn check_invariants(&self, end: f64) -> bool {
        let eps = 1e-9 * end.abs().max(1.0);
        let tiles = self.phases.first().is_some_and(|p| (p.t_from - self.t1).abs() <= eps)
            && self.phases.last().is_some_and(|p| (p.t_to - end).abs() <= eps)
            && self.phases.windows(2).all(|w| (w[0].t_to - w[1].t_from).abs() <= eps);
        tiles
            && self.t1 <= self.t_star + eps
            && self.t_star <= self.t2 + eps
            && self.t2 <= end + eps
            && self.rmse.is_finite()
            && self.phases.iter().all(|p| p.malware >= 0.0 && p.bonware >= 0.0)
    }
}

/// Settings for [`fit_ratio_curve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub hyper: FastFitHyperparams,
    /// Fractional drop that marks an attack.
    pub threshold: f64,
    pub refine: bool,
    pub tol: Tolerance,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            hyper: FastFitHyperparams::default(),
            threshold: 0.05,
            refine: false,
            tol: Tolerance {
                abs_tol: 1e-12,
                rel_tol: 1e-10,
                max_iter: 200,
            },
        }
    }
}

/// Full extraction on a curve normalized so `F_N = 1`: attack window,
/// switching time, fast fit of both phases and optional refinement.
///
/// A curve without a decline gives a degenerate fit with zero impacts. A
/// curve still falling at its end gives a single decline phase.
pub fn fit_ratio_curve(curve: &TimeSeries, opts: &FitOptions) -> Result<PiecewiseConstantFit> {
    opts.hyper.validate()?;
    let (f_n, f0) = (1.0, 1.0);
    let start = curve.t0();
    let end = curve.end();
    let (t1, t2) = match detect_attack_window(curve, opts.threshold, opts.hyper.min_window) {
        Ok(w) => w,
        Err(Error::NoAttackDetected) => {
            let mut fit = PiecewiseConstantFit {
                t_star: start,
                m: curve.min(),
                phases: vec![Phase {
                    t_from: start,
                    t_to: end,
                    malware: 0.0,
                    bonware: 0.0,
                }],
                t1: start,
                t2: start,
                rmse: 0.0,
                f_nominal: f_n,
                f_initial: f0,
                refined: false,
                degenerate: true,
            };
            fit.rmse = fit.rmse_against(curve);
            return Ok(fit);
        }
        Err(e) => return Err(e),
    };
    let k1 = ((t1 - start) / curve.dt()).round() as usize;
    let tail = if k1 + 1 < curve.len() {
        curve.slice(k1, curve.len() - 1)?
    } else {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    };

    let mut fit = match detect_switch_time(&tail) {
        Ok((t_star, m)) => {
            let decline = decline_phase(f0, f_n, m, t_star - t1, opts)?;
            let recovery = match fast_fit_phase2(f0, f_n, m, t_star, end, &opts.hyper) {
                Ok(p) => p,
                Err(Error::FitInfeasible(_)) => {
                    // Already near normal: full recovery at a rate that
                    // settles within the remaining span.
                    PhaseEstimate::new(0.0, 3.0 / (end - t_star))
                }
                Err(e) => return Err(e),
            };
            PiecewiseConstantFit {
                t_star,
                m,
                phases: vec![
                    Phase {
                        t_from: t1,
                        t_to: t_star,
                        malware: decline.malware,
                        bonware: decline.bonware,
                    },
                    Phase {
                        t_from: t_star,
                        t_to: end,
                        malware: recovery.malware,
                        bonware: recovery.bonware,
                    },
                ],
                t1,
                t2: t2.max(t_star),
                rmse: 0.0,
                f_nominal: f_n,
                f_initial: f0,
                refined: false,
                degenerate: false,
            }
        }
        Err(Error::NoRecovery) => {
            let m = tail.min();
            let decline = decline_phase(f0, f_n, m, end - t1, opts)?;
            PiecewiseConstantFit {
                t_star: end,
                m,
                phases: vec![Phase {
                    t_from: t1,
                    t_to: end,
                    malware: decline.malware,
                    bonware: decline.bonware,
                }],
                t1,
                t2: end,
                rmse: 0.0,
                f_nominal: f_n,
                f_initial: f0,
                refined: false,
                degenerate: false,
            }
        }
        Err(e) => return Err(e),
    };
    fit.rmse = fit.rmse_against(curve);
    debug_assert!(fit.check_invariants(end), "{fit:?}");
    if opts.refine {
        fit = refine_least_squares(curve, &fit, &opts.tol)?;
    }
    Ok(fit)
}

fn decline_phase(f0: f64, f_n: f64, m: f64, elapsed: f64, opts: &FitOptions) -> Result<PhaseEstimate> {
    let m = m.max(1e-6);
    match fast_fit_phase1(f0, f_n, m, elapsed.max(1e-9), &opts.hyper) {
        Err(Error::FitInfeasible(_)) => {
            // Drop faster than the rate ceiling allows: settle at the minimum.
            Ok(PhaseEstimate::new(Q_MAX * (1.0 - m / f_n), Q_MAX * m / f_n))
        }
        other => other,
    }
}
