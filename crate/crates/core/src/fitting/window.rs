use crate::error::{Error, Result};
use crate::numerics::TimeSeries;

/// Decline onset `t1` and recovery onset `t2` of a normalized curve.
///
/// `t1` is found from the first drop below `1 - threshold` lasting at least
/// `min_window` seconds (or to the end of the series), walked back to the
/// last sample still above `1 - threshold / 4`. `t2` is the last time the
/// curve is within the minimum's band, `m + max(threshold (1 - m), 3 sd)`,
/// where `sd` is the spread of the pre-onset samples.
pub fn detect_attack_window(curve: &TimeSeries, threshold: f64, min_window: f64) -> Result<(f64, f64)> {
    if !(threshold > 0.0 && threshold < 1.0) || !(min_window >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in (0, 1) and min_window >= 0 (got {threshold}, {min_window})"
        )));
    }
    let v = curve.values();
    let low = 1.0 - threshold;
    let hold = (min_window / curve.dt()).ceil() as usize;
    let mut first = None;
    let mut k = 0;
    while k < v.len() {
        if v[k] < low {
            let stop = (k + hold).min(v.len() - 1);
            match (k..=stop).find(|&j| v[j] >= low) {
                None => {
                    first = Some(k);
                    break;
                }
                Some(j) => k = j,
            }
        }
        k += 1;
    }
    let first = first.ok_or(Error::NoAttackDetected)?;
    let onset_level = 1.0 - 0.25 * threshold;
    let onset = (0..first).rev().find(|&j| v[j] >= onset_level).unwrap_or(0);

    let pre = &v[..=onset];
    let spread = if pre.len() >= 10 {
        let mean = pre.iter().sum::<f64>() / pre.len() as f64;
        (pre.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pre.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let m = v[onset..].iter().copied().fold(f64::INFINITY, f64::min);
    let band = m + (threshold * (1.0 - m)).max(3.0 * spread);
    let last = (onset..v.len()).rev().find(|&j| v[j] <= band).unwrap_or(onset);
    Ok((curve.time(onset), curve.time(last)))
}
