//! Per-interval closed-form advances of the functionality ODE.

use super::profile::LinearImpact;
use crate::numerics::{dawson, erfcx};

/// Relative size of `omega` (against the slopes) below which the closed form
/// loses too many digits to cancellation and quadrature is used instead.
const SMALL_OMEGA: f64 = 1e-5;

/// Constant impacts: advance `f0` by `s` seconds.
pub(crate) fn advance_constant(f_n: f64, f0: f64, m: f64, b: f64, s: f64) -> f64 {
    let q = m + b;
    if q == 0.0 {
        return f0;
    }
    let f_inf = f_n * b / q;
    (f0 - f_inf) * (-q * s).exp() + f_inf
}

/// Linear impacts with clamping at zero, advancing `f0` by `s` seconds from
/// the point where the coefficients are referenced.
pub(crate) fn advance_linear_clamped(f_n: f64, f0: f64, c: &LinearImpact, s: f64) -> f64 {
    if s <= 0.0 {
        return f0;
    }
    let mut cuts = Vec::with_capacity(4);
    cuts.push(0.0);
    for (v, slope) in [(c.nu, c.mu), (c.alpha, c.beta)] {
        if slope != 0.0 {
            let z = v / slope;
            if z > 0.0 && z < s {
                cuts.push(z);
            }
        }
    }
    cuts.push(s);
    cuts.sort_by(f64::total_cmp);

    let mut f = f0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let here = c.shifted(a);
        let (nu, mu) = if c.nu - c.mu * mid > 0.0 {
            (here.nu.max(0.0), here.mu)
        } else {
            (0.0, 0.0)
        };
        let (alpha, beta) = if c.alpha - c.beta * mid > 0.0 {
            (here.alpha.max(0.0), here.beta)
        } else {
            (0.0, 0.0)
        };
        f = advance_linear(f_n, f, &LinearImpact::new(nu, mu, alpha, beta), b - a);
    }
    f
}

/// Linear impacts without clamping. Callers guarantee `M + B >= 0` on `[0, s]`.
pub(crate) fn advance_linear(f_n: f64, f0: f64, c: &LinearImpact, s: f64) -> f64 {
    let lambda = c.lambda();
    let omega = c.omega();
    if omega == 0.0 {
        return advance_constant_rate(f_n, f0, c.alpha, c.beta, lambda, s);
    }
    let slope_scale = c.beta.abs().max(c.mu.abs());
    if omega.abs() < SMALL_OMEGA * slope_scale {
        return advance_by_quadrature(f_n, f0, c, s);
    }

    let phi = lambda * s - 0.5 * omega * s * s;
    let inv_omega_big = (-phi).exp();
    let j = if omega > 0.0 {
        let big_lambda = lambda / (2.0 * omega).sqrt();
        let a = big_lambda - (0.5 * omega).sqrt() * s;
        (std::f64::consts::PI / (2.0 * omega)).sqrt()
            * (erfcx(a) - erfcx(big_lambda) * inv_omega_big)
    } else {
        let kappa = -omega;
        let v0 = lambda / (2.0 * kappa).sqrt();
        let v1 = v0 + (0.5 * kappa).sqrt() * s;
        (2.0 / kappa).sqrt() * (dawson(v1) - dawson(v0) * inv_omega_big)
    };
    let homogeneous = f0 * inv_omega_big;
    let forced = (c.beta / omega) * (1.0 - inv_omega_big)
        + ((c.alpha * omega - c.beta * lambda) / omega) * j;
    homogeneous + f_n * forced
}

/// Total rate `lambda` constant in time while bonware `alpha - beta*s` varies.
fn advance_constant_rate(f_n: f64, f0: f64, alpha: f64, beta: f64, lambda: f64, s: f64) -> f64 {
    if lambda == 0.0 {
        return f0 + f_n * (alpha * s - 0.5 * beta * s * s);
    }
    let x = lambda * s;
    let decay = (-x).exp();
    // integral of exp(-lambda (s - p)) over [0, s]
    let e0 = -(-x).exp_m1() / lambda;
    // integral of p exp(-lambda (s - p)) over [0, s]
    let e1 = s * s * ramp_kernel(x);
    f0 * decay + f_n * (alpha * e0 - beta * e1)
}

/// `(x - 1 + e^{-x}) / x^2`, accurate for small `x`.
fn ramp_kernel(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // sum over k of (-x)^k / (k + 2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..16 {
            term *= -x / (k as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn advance_by_quadrature(f_n: f64, f0: f64, c: &LinearImpact, s: f64) -> f64 {
    let lambda = c.lambda();
    let omega = c.omega();
    let phi = |p: f64| lambda * p - 0.5 * omega * p * p;
    let phi_s = phi(s);
    let rate = lambda.abs().max((lambda - omega * s).abs());
    let panels = ((s * rate * 2.0).ceil() as usize).clamp(4, 20_000);
    let h = s / panels as f64;
    let integrand = |p: f64| (c.alpha - c.beta * p) * (phi(p) - phi_s).exp();
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut panel = 0.0;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            panel += w * (integrand(mid - half * x) + integrand(mid + half * x));
        }
        total += panel * half;
    }
    f0 * (-phi_s).exp() + f_n * total
}
