use super::TimeSeries;
use crate::error::{Error, Result};

/// Classic fixed-step fourth-order Runge-Kutta for a scalar ODE `F' = f(t, F)`.
///
/// The step is shrunk to `(t_end - t0) / n` with `n = ceil((t_end - t0) / step)`
/// so the output stays on a uniform grid whose last sample is exactly `t_end`.
pub fn integrate_ode_rk4<F>(f: F, y0: f64, t0: f64, t_end: f64, step: f64) -> Result<TimeSeries>
where
    F: Fn(f64, f64) -> f64,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::InvalidArgument(format!(
            "integration span [{t0}, {t_end}] is empty"
        )));
    }
    if !y0.is_finite() {
        return Err(Error::InvalidArgument(format!("initial value {y0} is not finite")));
    }

    let ratio = (t_end - t0) / step;
    let rounded = ratio.round();
    let n = if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded
    } else {
        ratio.ceil()
    }
    .max(1.0) as usize;
    let h = (t_end - t0) / n as f64;

    let eval = |t: f64, y: f64| -> Result<f64> {
        let d = f(t, y);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Integration { t })
        }
    };

    let mut values = Vec::with_capacity(n + 1);
    let mut y = y0;
    values.push(y);
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let k1 = eval(t, y)?;
        let k2 = eval(t + 0.5 * h, y + 0.5 * h * k1)?;
        let k3 = eval(t + 0.5 * h, y + 0.5 * h * k2)?;
        let k4 = eval(t + h, y + h * k3)?;
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Err(Error::Integration { t: t + h });
        }
        values.push(y);
    }
    TimeSeries::new(t0, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_derivative_is_constant() {
        let s = integrate_ode_rk4(|_, _| 0.0, 1.0, 0.0, 3.0, 0.1).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0));
        assert!((s.end() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay() {
        let s = integrate_ode_rk4(|_, y| -0.5 * y, 1.0, 0.0, 2.0, 1e-3).unwrap();
        assert_eq!(s.len(), 2001);
        let last = *s.values().last().unwrap();
        assert!((last - 0.3678794411714423).abs() < 1e-9);
    }

    #[test]
    fn constant_model_with_bonware() {
        // M = B = 0.5, F_N = F0 = 1: F(1) = 0.5 + 0.5 / e.
        let s = integrate_ode_rk4(|_, y| 0.5 * (1.0 - y) - 0.5 * y, 1.0, 0.0, 1.0, 1e-3).unwrap();
        let last = *s.values().last().unwrap();
        assert!((last - 0.6839397205857212).abs() < 1e-9);
    }

    #[test]
    fn partial_final_step_lands_on_end() {
        let s = integrate_ode_rk4(|_, y| -y, 1.0, 0.0, 1.05, 0.1).unwrap();
        assert_eq!(s.len(), 12);
        assert!((s.end() - 1.05).abs() < 1e-12);
        assert!((s.values()[11] - (-1.05f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn halving_step_shows_fourth_order() {
        let exact = (-2.0f64).exp();
        let err = |h: f64| {
            let s = integrate_ode_rk4(|_, y| -y, 1.0, 0.0, 2.0, h).unwrap();
            (s.values().last().unwrap() - exact).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn non_finite_derivative_reports_time() {
        let r = integrate_ode_rk4(|t, _| if t > 0.5 { f64::NAN } else { 0.0 }, 1.0, 0.0, 1.0, 0.1);
        match r {
            Err(Error::Integration { t }) => assert!(t > 0.5 && t <= 0.6 + 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(integrate_ode_rk4(|_, _| 0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(integrate_ode_rk4(|_, _| 0.0, 1.0, 1.0, 1.0, 0.1).is_err());
    }
}
