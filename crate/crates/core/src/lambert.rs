//! Principal branch of the Lambert W function on the real line.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;
const MAX_ITERS: usize = 64;

/// `W0(x)`: the solution `w >= -1` of `w * exp(w) = x`, for `x >= -1/e`.
///
/// Initial guesses come from the branch-point series near `-1/e`, the Taylor
/// series around zero and the asymptotic `ln x - ln ln x` for large `x`; the
/// guess is then polished with Halley's iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("lambert_w0 of NaN".into()));
    }
    if x < BRANCH_POINT {
        // Allow rounding noise on arguments computed as -exp(-1).
        if x >= BRANCH_POINT - 4.0 * f64::EPSILON {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("lambert_w0 argument {x} below -1/e")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let q = E * x + 1.0;
    if q <= 0.0 {
        return Ok(-1.0);
    }
    let mut w = initial_guess(x, q);
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 <= 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        let next = if next < -1.0 { 0.5 * (w - 1.0) } else { next };
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300);
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64, q: f64) -> f64 {
    if q < 0.3 {
        let p = (2.0 * q).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() < 0.25 {
        x - x * x + 1.5 * x * x * x
    } else if x < 3.0 {
        // ln(1 + x) is within ~0.3 of W0 on this range.
        0.5 * x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// Solves `1 - (1 - x) * exp(x) = delta` for `x > 0`, given `delta > 0`.
///
/// Equivalent to `x = 1 + W0((delta - 1) / e)`, but keeps full relative
/// accuracy when `delta` is tiny (the argument then sits next to the branch
/// point and the subtraction `1 + W0` would cancel).
pub fn solve_one_minus_x_exp(delta: f64) -> f64 {
    if !(delta > 0.0) {
        return 0.0;
    }
    if delta == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut x = if delta < 1e-3 {
        // W0(-1/e + eps) = -1 + p - p^2/3 + 11 p^3 / 72 with p = sqrt(2 delta).
        let p = (2.0 * delta).sqrt();
        p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        // The Lambert form is accurate once delta is not tiny.
        1.0 + lambert_w0((delta - 1.0) / E).unwrap_or(-1.0)
    };
    for _ in 0..8 {
        let g = g_stable(x) - delta;
        let dg = x * x.exp();
        if !(dg > 0.0) || !dg.is_finite() {
            break;
        }
        let step = g / dg;
        let next = (x - step).max(0.5 * x);
        let done = (next - x).abs() <= 2.0 * f64::EPSILON * next;
        x = next;
        if done {
            break;
        }
    }
    x
}

/// `1 - (1 - x) e^x` without catastrophic cancellation for small `x`.
pub(crate) fn g_stable(x: f64) -> f64 {
    if x > 700.0 {
        f64::INFINITY
    } else if x.abs() < 1e-4 {
        x * x * (0.5 + x * (1.0 / 3.0 + x / 8.0))
    } else {
        x * x.exp() - x.exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(x: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn identities() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(-1.0 / E).unwrap() + 1.0).abs() < 1e-7);
    }

    #[test]
    fn bisection_oracle_at_minus_point_two() {
        // Oracle: 200 halvings of [-1, 0]; w e^w is increasing there.
        let oracle = bisect(-0.2, -1.0, 0.0);
        let w = lambert_w0(-0.2).unwrap();
        assert!((w - oracle).abs() < 1e-14, "{w} vs {oracle}");
        assert!((w - (-0.2591711018190737)).abs() < 1e-15);
    }

    #[test]
    fn domain_error_below_branch() {
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn residual_over_range() {
        let n = 20_000;
        for i in 0..=n {
            let x = BRANCH_POINT + (10.0 - BRANCH_POINT) * i as f64 / n as f64;
            let w = lambert_w0(x).unwrap();
            let r = (w * w.exp() - x).abs();
            assert!(r <= 1e-12 * x.abs().max(1.0), "x={x} w={w} r={r}");
            assert!(w >= -1.0);
        }
        for &x in &[1e-300, 1e-20, -1e-20, 1e3, 1e10, 1e100, 1e300] {
            let w = lambert_w0(x).unwrap();
            let r = (w * w.exp() - x).abs();
            assert!(r <= 1e-12 * x.abs().max(1.0), "x={x} w={w} r={r}");
        }
    }

    #[test]
    fn one_minus_x_exp_small_and_large() {
        for &d in &[1e-14, 1e-10, 1e-6, 1e-3, 0.1, 0.9, 1.0, 5.0, 1e3, 1e8] {
            let x = solve_one_minus_x_exp(d);
            let r = g_stable(x) - d;
            assert!(r.abs() <= 1e-12 * d, "delta={d} x={x} r={r}");
            let via_w = 1.0 + lambert_w0((d - 1.0) / E).unwrap();
            if d > 1e-3 {
                assert!((x - via_w).abs() <= 1e-10 * x.max(1.0));
            }
        }
    }
}
