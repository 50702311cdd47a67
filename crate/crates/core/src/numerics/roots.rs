use super::Tolerance;
use crate::error::{Error, Result};

/// Bisection on a bracket `[lo, hi]` whose endpoints give opposite signs.
///
/// Stops once the bracket is narrower than `abs_tol + rel_tol * |mid|` or
/// cannot be split further in double precision.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: &Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!(
            "no sign change on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    // Bisection halves the bracket every step, so the f64 resolution is
    // reached well before this cap.
    for _ in 0..tol.max_iter.max(2200) {
        let mid = a + 0.5 * (b - a);
        if mid <= a || mid >= b || (b - a) <= tol.abs_tol + tol.rel_tol * mid.abs() {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if !fm.is_finite() {
            return Err(Error::Domain(format!("function is not finite at {mid}")));
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(a + 0.5 * (b - a))
}

/// Searches outward from `x0` for a sign change, doubling the probe distance
/// on each side up to `max_expansions` times. Returns the bracket.
pub fn expand_bracket<F>(mut f: F, x0: f64, max_expansions: usize) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let f0 = f(x0);
    if !f0.is_finite() {
        return None;
    }
    if f0 == 0.0 {
        return Some((x0, x0));
    }
    let mut d = 0.1 * x0.abs().max(1.0);
    let (mut right, mut left) = (x0, x0);
    for _ in 0..max_expansions {
        for (prev, next) in [(&mut right, x0 + d), (&mut left, x0 - d)] {
            let fx = f(next);
            if fx.is_finite() && (fx == 0.0 || fx.signum() != f0.signum()) {
                return Some(if next > x0 { (*prev, next) } else { (next, *prev) });
            }
            *prev = next;
        }
        d *= 2.0;
    }
    None
}

fn inf_norm(r: (f64, f64)) -> f64 {
    if r.0.is_finite() && r.1.is_finite() {
        r.0.abs().max(r.1.abs())
    } else {
        f64::INFINITY
    }
}

/// Solves a 2x2 nonlinear system `residual(x1, x2) = (0, 0)`.
///
/// Damped Newton with a forward-difference Jacobian runs first. If it stalls
/// or hits a singular Jacobian, the system is reduced to a scalar problem by
/// solving one equation for one unknown (bracketed bisection) and bisecting
/// the other equation along that curve; all four pairings are tried.
pub fn solve_2x2_nonlinear<R>(residual: R, initial: (f64, f64), tol: &Tolerance) -> Result<(f64, f64)>
where
    R: Fn(f64, f64) -> (f64, f64),
{
    let mut x = initial;
    let mut r = residual(x.0, x.1);
    let mut best = (x, inf_norm(r));
    let mut iterations = 0;

    while iterations < tol.max_iter {
        let norm = inf_norm(r);
        if norm <= tol.abs_tol {
            return Ok(x);
        }
        iterations += 1;

        let h0 = f64::EPSILON.sqrt() * x.0.abs().max(1.0);
        let h1 = f64::EPSILON.sqrt() * x.1.abs().max(1.0);
        let r0 = residual(x.0 + h0, x.1);
        let r1 = residual(x.0, x.1 + h1);
        let j = [
            [(r0.0 - r.0) / h0, (r1.0 - r.0) / h1],
            [(r0.1 - r.1) / h0, (r1.1 - r.1) / h1],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            break;
        }
        let dx0 = -(j[1][1] * r.0 - j[0][1] * r.1) / det;
        let dx1 = -(-j[1][0] * r.0 + j[0][0] * r.1) / det;

        let norm2 = r.0.hypot(r.1);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = (x.0 + lambda * dx0, x.1 + lambda * dx1);
            let rc = residual(cand.0, cand.1);
            let n2 = rc.0.hypot(rc.1);
            if n2.is_finite() && n2 <= (1.0 - 1e-4 * lambda) * norm2 {
                x = cand;
                r = rc;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        let n = inf_norm(r);
        if n < best.1 {
            best = (x, n);
        }
    }
    if inf_norm(r) <= tol.abs_tol {
        return Ok(x);
    }

    if let Some(sol) = eliminate_and_bisect(&residual, best.0, tol) {
        return Ok(sol);
    }
    Err(Error::Convergence {
        iterations,
        best: best.0,
        residual: best.1,
    })
}

fn eliminate_and_bisect<R>(residual: &R, start: (f64, f64), tol: &Tolerance) -> Option<(f64, f64)>
where
    R: Fn(f64, f64) -> (f64, f64),
{
    let scalar_tol = Tolerance {
        abs_tol: 0.0,
        rel_tol: f64::EPSILON,
        max_iter: tol.max_iter,
    };
    // (which unknown is eliminated, which equation eliminates it)
    for (elim_x2, via_first) in [(true, true), (true, false), (false, true), (false, false)] {
        let pick = |r: (f64, f64), first: bool| if first { r.0 } else { r.1 };
        let assemble = |outer: f64, inner: f64| if elim_x2 { (outer, inner) } else { (inner, outer) };
        let (outer0, inner0) = if elim_x2 { start } else { (start.1, start.0) };

        let inner_solve = |outer: f64| -> Option<f64> {
            let g = |inner: f64| {
                let (a, b) = assemble(outer, inner);
                pick(residual(a, b), via_first)
            };
            let (lo, hi) = expand_bracket(g, inner0, 64)?;
            if lo == hi {
                return Some(lo);
            }
            bisect(g, lo, hi, &scalar_tol).ok()
        };
        let outer_fn = |outer: f64| -> f64 {
            match inner_solve(outer) {
                Some(inner) => {
                    let (a, b) = assemble(outer, inner);
                    pick(residual(a, b), !via_first)
                }
                None => f64::NAN,
            }
        };
        let Some((lo, hi)) = expand_bracket(outer_fn, outer0, 64) else {
            continue;
        };
        let outer = if lo == hi {
            lo
        } else {
            match bisect(outer_fn, lo, hi, &scalar_tol) {
                Ok(v) => v,
                Err(_) => continue,
            }
        };
        let Some(inner) = inner_solve(outer) else {
            continue;
        };
        let sol = assemble(outer, inner);
        if inf_norm(residual(sol.0, sol.1)) <= tol.abs_tol {
            return Some(sol);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::new(1e-12, 1e-12, 100).unwrap()
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, &tol()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, &tol()).is_err());
    }

    #[test]
    fn bracket_expansion() {
        let (a, b) = expand_bracket(|x| x - 37.0, 0.0, 20).unwrap();
        assert!(a <= 37.0 && 37.0 <= b);
        assert!(expand_bracket(|x| x * x + 1.0, 0.0, 10).is_none());
    }

    #[test]
    fn linear_decoupled() {
        let (a, b) = solve_2x2_nonlinear(|x, y| (x - 3.0, y + 2.0), (0.0, 0.0), &tol()).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (b + 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_system() {
        let (a, b) =
            solve_2x2_nonlinear(|x, y| (x * x - 4.0, x * y - 2.0), (1.0, 1.0), &tol()).unwrap();
        assert!((a - 2.0).abs() < 1e-10 && (b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fallback_handles_newton_stall() {
        // Singular Jacobian at the start point forces the elimination path.
        let (a, b) = solve_2x2_nonlinear(
            |x, y| (x * x * x - 8.0, y - x),
            (0.0, 5.0),
            &tol(),
        )
        .unwrap();
        assert!((a - 2.0).abs() < 1e-9 && (b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn unsolvable_reports_best_iterate() {
        let r = solve_2x2_nonlinear(|x, y| (x * x + 1.0, y), (0.5, 0.5), &tol());
        match r {
            Err(Error::Convergence { residual, .. }) => assert!(residual >= 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
