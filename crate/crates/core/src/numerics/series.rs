use crate::error::{Error, Result};

/// A uniformly sampled scalar signal.
///
/// Sample `k` sits at `t0 + k * dt`; no per-sample timestamps are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

/// Relative slack used when snapping times onto the sample grid.
pub(crate) const GRID_EPS: f64 = 1e-9;

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::InvalidSeries(format!("start time {t0} is not finite")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "sample period must be positive, got {dt}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "sample {k} is not finite ({})",
                values[k]
            )));
        }
        Ok(Self { t0, dt, values })
    }

    /// Samples `f` at `n` grid points.
    pub fn from_fn(t0: f64, dt: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let values = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(t0, dt, values)
    }

    /// Same grid, new samples.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Alignment(format!(
                "expected {} samples, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Self::new(self.t0, self.dt, values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; a series holds at least two samples.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    /// Time of the last sample.
    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fractional sample position of `t`, snapped to an integer when within
    /// grid rounding of one.
    pub(crate) fn position(&self, t: f64) -> f64 {
        let p = (t - self.t0) / self.dt;
        let r = p.round();
        if (p - r).abs() <= GRID_EPS * p.abs().max(1.0) {
            r
        } else {
            p
        }
    }

    pub(crate) fn check_span(&self, from: f64, to: f64) -> Result<()> {
        let slack = GRID_EPS * self.dt * (self.len() as f64);
        if !(from.is_finite() && to.is_finite())
            || from < self.t0 - slack
            || to > self.end() + slack
        {
            return Err(Error::Range {
                from,
                to,
                start: self.t0,
                end: self.end(),
            });
        }
        Ok(())
    }

    /// Linear interpolation between neighbouring samples.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_span(t, t)?;
        let p = self.position(t).clamp(0.0, (self.len() - 1) as f64);
        let i = (p.floor() as usize).min(self.len() - 2);
        let frac = p - i as f64;
        let (a, b) = (self.values[i], self.values[i + 1]);
        Ok(if frac == 0.0 { a } else { a + frac * (b - a) })
    }

    /// True when both series share start, period and length.
    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        let tol = GRID_EPS.max(1e-7) * self.dt;
        self.len() == other.len()
            && (self.dt - other.dt).abs() <= tol
            && (self.t0 - other.t0).abs() <= tol * self.len() as f64
    }

    /// Pointwise combination of two series on the same grid.
    pub fn zip_with(
        &self,
        other: &TimeSeries,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<TimeSeries> {
        if !self.same_grid(other) {
            return Err(Error::Alignment(format!(
                "grids differ: (t0 {}, dt {}, n {}) vs (t0 {}, dt {}, n {})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        TimeSeries::new(self.t0, self.dt, values)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<TimeSeries> {
        self.with_values(self.values.iter().copied().map(f).collect())
    }

    /// Every `stride`-th sample, keeping the first.
    pub fn decimate(&self, stride: usize) -> Result<TimeSeries> {
        if stride == 0 {
            return Err(Error::InvalidArgument("decimation stride must be positive".into()));
        }
        let values = self.values.iter().copied().step_by(stride).collect();
        TimeSeries::new(self.t0, self.dt * stride as f64, values)
    }

    /// Samples `first..=last`.
    pub fn slice(&self, first: usize, last: usize) -> Result<TimeSeries> {
        if last >= self.len() || last <= first {
            return Err(Error::InvalidArgument(format!(
                "cannot take samples {first}..={last} of {}",
                self.len()
            )));
        }
        TimeSeries::new(self.time(first), self.dt, self.values[first..=last].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new(0.0, 0.0, vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(0.0, -1.0, vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new(0.0, 1.0, vec![1.0]).is_err());
        assert!(TimeSeries::new(0.0, 1.0, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn times_follow_grid() {
        let s = TimeSeries::new(2.0, 0.5, vec![0.0; 5]).unwrap();
        assert_eq!(s.time(3), 3.5);
        assert_eq!(s.end(), 4.0);
    }

    #[test]
    fn interpolates_linearly() {
        let s = TimeSeries::new(0.0, 1.0, vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.value_at(0.25).unwrap(), 0.5);
        assert_eq!(s.value_at(2.0).unwrap(), 4.0);
        assert!(s.value_at(2.5).is_err());
    }

    #[test]
    fn decimation_keeps_grid_consistent() {
        let s = TimeSeries::from_fn(0.0, 0.5, 9, |t| t).unwrap();
        let d = s.decimate(4).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0, 4.0]);
        assert_eq!(d.dt(), 2.0);
    }
}
