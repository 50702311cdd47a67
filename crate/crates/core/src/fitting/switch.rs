use crate::error::{Error, Result};
use crate::numerics::TimeSeries;

/// Share of the curve's range treated as "at the minimum".
pub const FLATNESS_FRACTION: f64 = 0.01;

/// Switching time and minimum of a dip-and-recover curve.
///
/// Takes the longest run of samples around the global minimum that stay
/// within the flatness tolerance of it and returns the run's midpoint.
pub fn detect_switch_time(curve: &TimeSeries) -> Result<(f64, f64)> {
    let v = curve.values();
    let (k_min, &m) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("series has samples");
    let tol = FLATNESS_FRACTION * (curve.max() - m);
    let mut lo = k_min;
    while lo > 0 && v[lo - 1] <= m + tol {
        lo -= 1;
    }
    let mut hi = k_min;
    while hi + 1 < v.len() && v[hi + 1] <= m + tol {
        hi += 1;
    }
    if lo == 0 || hi == v.len() - 1 {
        return Err(Error::NoRecovery);
    }
    Ok((0.5 * (curve.time(lo) + curve.time(hi)), m))
}
