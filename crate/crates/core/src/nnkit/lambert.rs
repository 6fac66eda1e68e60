//! Principal branch of the Lambert W function on the reals.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// `-1/e`, the branch point of W.
pub const BRANCH_POINT: f64 = -1.0 / E;

const MAX_ITERATIONS: usize = 64;

/// Principal-branch `W₀(x)` for `x ≥ −1/e`, i.e. the `w ≥ −1` solving
/// `w·eʷ = x`.
///
/// The starting point is a branch-point series `−1 + p − p²/3 + 11p³/72`
/// with `p = sqrt(2(e·x + 1))` near `−1/e`, `ln(1 + x)` on the moderate range,
/// and `ln x − ln ln x` for large `x`; Halley's iteration then refines it
/// until the step falls below a few ulps.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::invalid("x", "NaN"));
    }
    if x < BRANCH_POINT {
        return Err(Error::invalid(
            "x",
            format!("{x} is below the branch point -1/e"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut w = initial_guess(x);
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        // Halley: w -= f / (eʷ(w+1) − (w+2)f / (2(w+1)))
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = (w - step).max(-1.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.25 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() <= 1e-15);
        assert_eq!(lambert_w(BRANCH_POINT).unwrap(), -1.0);
    }

    /// Newton's method on `w·eʷ − 1`, independent of the Halley path.
    fn newton_omega() -> f64 {
        let mut w = 0.5f64;
        for _ in 0..100 {
            let f = w * w.exp() - 1.0;
            let step = f / (w.exp() * (w + 1.0));
            w -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        w
    }

    #[test]
    fn omega_constant() {
        let oracle = newton_omega();
        assert!((oracle - 0.567_143_290_409_783_9).abs() < 1e-12);
        assert!((lambert_w(1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn rejects_below_branch() {
        assert!(lambert_w(BRANCH_POINT - 1e-9).is_err());
        assert!(lambert_w(-1.0).is_err());
        assert!(lambert_w(f64::NAN).is_err());
    }

    #[test]
    fn near_branch_point() {
        for eps in [1e-15, 1e-12, 1e-9, 1e-6, 1e-3] {
            let x = BRANCH_POINT + eps;
            let w = lambert_w(x).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() <= 1e-14, "x={x} w={w}");
        }
    }

    #[test]
    fn monotone_on_grid() {
        let mut prev = -1.0;
        for i in 1..2000 {
            let x = BRANCH_POINT + (i as f64 / 100.0).powi(3);
            let w = lambert_w(x).unwrap();
            assert!(w > prev, "not increasing at x={x}");
            prev = w;
        }
    }

    /// Residual of the defining identity measured in units of the rounding
    /// error of the best representable `w`: `x·(1 + w)·ulp(w)`.
    #[test]
    fn identity_holds_to_representable_precision() {
        let lo = 1e-9f64.log10();
        let hi = (1e6 - BRANCH_POINT).log10();
        for i in 0..1000 {
            let x = BRANCH_POINT + 10f64.powf(lo + (hi - lo) * i as f64 / 999.0);
            let w = lambert_w(x).unwrap();
            let r = (w * w.exp() - x).abs();
            if x.abs() <= 1e4 {
                assert!(r <= 1e-10, "x={x} residual {r}");
            } else {
                let representable = x.abs() * (1.0 + w) * w.abs() * f64::EPSILON;
                assert!(r <= 4.0 * representable, "x={x} residual {r}");
            }
        }
    }
}
