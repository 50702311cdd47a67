//! Numerical kernel shared by the model, metric and fitting code.
//!
//! Everything here is a pure function over immutable inputs.

mod median;
mod ode;
mod quadrature;
mod roots;
mod series;
pub mod special;

pub use median::running_median;
pub use ode::integrate_ode_rk4;
pub use quadrature::{neumaier_sum, trapezoid};
pub use roots::{bisect, expand_bracket, solve_2x2_nonlinear};
pub use series::TimeSeries;
pub use special::{dawson, erf, erfc, erfcx};

use crate::error::{Error, Result};

/// Stopping rule for iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        let ok = abs_tol.is_finite()
            && rel_tol.is_finite()
            && abs_tol >= 0.0
            && rel_tol >= 0.0
            && abs_tol + rel_tol > 0.0
            && max_iter > 0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "tolerance requires abs_tol, rel_tol >= 0 with a positive sum and max_iter > 0 \
                 (got {abs_tol}, {rel_tol}, {max_iter})"
            )));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_iter: 100,
        }
    }
}
