//! Two-phase closed-form parameter extraction.

use super::{FastFitHyperparams, PhaseEstimate, Q_MAX};
use crate::error::{Error, Result};
use crate::model::advance_constant;
use crate::numerics::{bisect, Tolerance};

fn root_tolerance() -> Tolerance {
    Tolerance {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_iter: 400,
    }
}

fn check_levels(f0: f64, f_n: f64) -> Result<()> {
    if !(f_n.is_finite() && f_n > 0.0 && f0.is_finite() && f0 > 0.0 && f0 <= f_n) {
        return Err(Error::Domain(format!("need 0 < F0 <= F_N, got F0 = {f0}, F_N = {f_n}")));
    }
    Ok(())
}

/// Decline phase. `t_star` is the time from decline onset to the minimum `m`.
///
/// The equilibrium share is fixed by `alpha * m = F_N B/Q`; the rate then
/// makes the constant-impact curve pass through `m` at `t_star`.
pub fn fast_fit_phase1(f0: f64, f_n: f64, m: f64, t_star: f64, hyper: &FastFitHyperparams) -> Result<PhaseEstimate> {
    hyper.validate()?;
    check_levels(f0, f_n)?;
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Domain(format!("minimum must be positive, got {m}")));
    }
    if !(t_star.is_finite() && t_star > 0.0) {
        return Err(Error::Domain(format!("switching time must be positive, got {t_star}")));
    }
    if m >= f0 {
        return Ok(PhaseEstimate::degenerate());
    }
    let share = hyper.alpha * m / f_n;
    let g = |q: f64| advance_constant(f_n, f0, q * (1.0 - share), q * share, t_star) - m;
    if g(Q_MAX) > 0.0 {
        return Err(Error::FitInfeasible(format!(
            "decline to {m} within {t_star} s needs a rate above {Q_MAX}"
        )));
    }
    let q = bisect(g, 0.0, Q_MAX, &root_tolerance())
        .map_err(|e| Error::FitInfeasible(format!("decline phase: {e}")))?;
    Ok(PhaseEstimate::new(q * (1.0 - share), q * share))
}

/// Recovery phase from the minimum `m` at `t_star` to the run end `t_end`.
///
/// The asymptote is fixed by `zeta = F0 B/Q`; the rate makes the curve reach
/// `alpha_tilde * zeta` at `t_end`. Rates are capped at the solver ceiling.
pub fn fast_fit_phase2(
    f0: f64,
    f_n: f64,
    m: f64,
    t_star: f64,
    t_end: f64,
    hyper: &FastFitHyperparams,
) -> Result<PhaseEstimate> {
    hyper.validate()?;
    check_levels(f0, f_n)?;
    if !(m.is_finite() && m > 0.0 && m < f_n) {
        return Err(Error::Domain(format!("need 0 < m < F_N, got {m}")));
    }
    if !(t_star.is_finite() && t_end.is_finite() && t_end > t_star) {
        return Err(Error::Domain(format!("need T > t*, got t* = {t_star}, T = {t_end}")));
    }
    let share = hyper.zeta / f0;
    if share > 1.0 {
        return Err(Error::FitInfeasible(format!(
            "asymptote {} exceeds normal functionality",
            hyper.zeta
        )));
    }
    let span = t_end - t_star;
    let target = hyper.alpha_tilde * hyper.zeta;
    let g = |q: f64| advance_constant(f_n, m, q * (1.0 - share), q * share, span) - target;
    if g(0.0) >= 0.0 {
        return Err(Error::FitInfeasible(format!(
            "minimum {m} already at or above the recovery target {target}"
        )));
    }
    let q = if g(Q_MAX) < 0.0 {
        Q_MAX
    } else {
        bisect(g, 0.0, Q_MAX, &root_tolerance())
            .map_err(|e| Error::FitInfeasible(format!("recovery phase: {e}")))?
    };
    Ok(PhaseEstimate::new(q * (1.0 - share), q * share))
}
