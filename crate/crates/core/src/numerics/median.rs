use super::TimeSeries;
use crate::error::{Error, Result};

/// Centered running median over a time window.
///
/// Sample `k` becomes the median of every sample within `window / 2` of
/// `t_k`; the window shrinks at the series edges so the output keeps the
/// input grid. Even-sized windows average the two central order statistics.
pub fn running_median(series: &TimeSeries, window: f64) -> Result<TimeSeries> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "median window must be positive, got {window}"
        )));
    }
    let v = series.values();
    let n = v.len();
    let half = ((0.5 * window / series.dt()) * (1.0 + 1e-12)).floor() as usize;
    if half == 0 {
        return Ok(series.clone());
    }

    let mut sorted: Vec<f64> = Vec::with_capacity(2 * half + 1);
    let mut hi = half.min(n - 1);
    for &x in &v[..=hi] {
        insert(&mut sorted, x);
    }
    let mut lo = 0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let want_hi = (k + half).min(n - 1);
        while hi < want_hi {
            hi += 1;
            insert(&mut sorted, v[hi]);
        }
        let want_lo = k.saturating_sub(half);
        while lo < want_lo {
            remove(&mut sorted, v[lo]);
            lo += 1;
        }
        out.push(median_of_sorted(&sorted));
    }
    series.with_values(out)
}

fn insert(sorted: &mut Vec<f64>, x: f64) {
    let idx = sorted.partition_point(|y| y.total_cmp(&x).is_lt());
    sorted.insert(idx, x);
}

fn remove(sorted: &mut Vec<f64>, x: f64) {
    if let Ok(idx) = sorted.binary_search_by(|y| y.total_cmp(&x)) {
        sorted.remove(idx);
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinking_edges() {
        let s = TimeSeries::new(0.0, 1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let m = running_median(&s, 3.0).unwrap();
        assert_eq!(m.values(), &[1.5, 2.0, 3.0, 4.0, 4.5]);
    }

    #[test]
    fn constant_unchanged() {
        let s = TimeSeries::new(0.0, 0.5, vec![7.0; 20]).unwrap();
        assert_eq!(running_median(&s, 4.0).unwrap(), s);
    }

    #[test]
    fn spike_removed() {
        let mut v = vec![1.0; 9];
        v[4] = 100.0;
        let s = TimeSeries::new(0.0, 1.0, v).unwrap();
        let m = running_median(&s, 2.0).unwrap();
        assert!(m.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn matches_brute_force() {
        let v: Vec<f64> = (0..200)
            .map(|k| ((k * 37) % 23) as f64 + 0.1 * (k as f64).sin())
            .collect();
        let s = TimeSeries::new(0.0, 0.25, v.clone()).unwrap();
        let m = running_median(&s, 3.0).unwrap();
        let half = 6usize;
        for k in 0..v.len() {
            let mut w: Vec<f64> = v[k.saturating_sub(half)..=(k + half).min(v.len() - 1)].to_vec();
            w.sort_by(f64::total_cmp);
            let want = if w.len() % 2 == 1 {
                w[w.len() / 2]
            } else {
                0.5 * (w[w.len() / 2 - 1] + w[w.len() / 2])
            };
            assert_eq!(m.values()[k], want, "k = {k}");
        }
    }

    #[test]
    fn rejects_nonpositive_window() {
        let s = TimeSeries::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        assert!(running_median(&s, 0.0).is_err());
    }
}
