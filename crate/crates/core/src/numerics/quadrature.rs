use super::TimeSeries;
use crate::error::{Error, Result};

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Trapezoidal area under `series` between `from` and `to`.
///
/// Endpoints that fall between samples are handled by linear interpolation.
pub fn trapezoid(series: &TimeSeries, from: f64, to: f64) -> Result<f64> {
    series.check_span(from, to)?;
    if from >= to {
        return Err(Error::InvalidArgument(format!(
            "integration bounds must satisfy from < to (got {from}, {to})"
        )));
    }
    let last = (series.len() - 1) as f64;
    let pa = series.position(from).clamp(0.0, last);
    let pb = series.position(to).clamp(0.0, last);
    let v = series.values();
    let dt = series.dt();
    let interp = |p: f64| -> f64 {
        let i = (p.floor() as usize).min(v.len() - 2);
        let frac = p - i as f64;
        if frac == 0.0 {
            v[i]
        } else {
            v[i] + frac * (v[i + 1] - v[i])
        }
    };

    let ia = pa.ceil() as usize;
    let ib = pb.floor() as usize;
    if ia > ib {
        // Both ends inside the same cell.
        return Ok((pb - pa) * dt * 0.5 * (interp(pa) + interp(pb)));
    }

    let head = (ia as f64 - pa) * dt * 0.5 * (interp(pa) + v[ia]);
    let tail = (pb - ib as f64) * dt * 0.5 * (v[ib] + interp(pb));
    let inner = if ib > ia {
        let edges = 0.5 * (v[ia] + v[ib]);
        dt * neumaier_sum(std::iter::once(edges).chain(v[ia + 1..ib].iter().copied()))
    } else {
        0.0
    };
    Ok(neumaier_sum([head, inner, tail]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle() {
        let s = TimeSeries::new(0.0, 1.0, vec![2.0; 11]).unwrap();
        assert_eq!(trapezoid(&s, 0.0, 10.0).unwrap(), 20.0);
    }

    #[test]
    fn triangle() {
        let s = TimeSeries::from_fn(0.0, 1.0, 5, |t| t).unwrap();
        assert_eq!(trapezoid(&s, 0.0, 4.0).unwrap(), 8.0);
    }

    #[test]
    fn sampled_exponential() {
        let s = TimeSeries::from_fn(0.0, 0.01, 101, |t| (-t).exp()).unwrap();
        let a = trapezoid(&s, 0.0, 1.0).unwrap();
        assert!((a - 0.6321205588285577).abs() < 1e-4);
    }

    #[test]
    fn off_grid_endpoints_interpolate() {
        // Linear data is integrated exactly by the trapezoid rule.
        let s = TimeSeries::from_fn(0.0, 1.0, 6, |t| 3.0 * t + 1.0).unwrap();
        let a = trapezoid(&s, 0.25, 3.6).unwrap();
        let exact = |t: f64| 1.5 * t * t + t;
        assert!((a - (exact(3.6) - exact(0.25))).abs() < 1e-12);
        let b = trapezoid(&s, 1.2, 1.7).unwrap();
        assert!((b - (exact(1.7) - exact(1.2))).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_error() {
        let s = TimeSeries::new(0.0, 1.0, vec![1.0; 4]).unwrap();
        assert!(matches!(trapezoid(&s, -0.5, 2.0), Err(Error::Range { .. })));
        assert!(matches!(trapezoid(&s, 0.0, 3.5), Err(Error::Range { .. })));
        assert!(trapezoid(&s, 2.0, 1.0).is_err());
    }

    #[test]
    fn additive_at_grid_points() {
        let s = TimeSeries::from_fn(0.0, 0.1, 1001, |t| (0.3 * t).sin() + 2.0).unwrap();
        let whole = trapezoid(&s, 0.0, 100.0).unwrap();
        let split = trapezoid(&s, 0.0, 37.3).unwrap() + trapezoid(&s, 37.3, 100.0).unwrap();
        assert!((whole - split).abs() <= 1e-12);
    }
}
