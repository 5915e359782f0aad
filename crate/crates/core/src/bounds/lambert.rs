//! Lower real branch `W_{-1}` of the Lambert W function.

use crate::error::{Error, Result};

/// `-1/e`, the branch point shared by `W_0` and `W_{-1}`.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_321_6;

/// Default residual tolerance `|w e^w - x|`.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_BISECTIONS: usize = 200;
const MAX_HALLEY: usize = 50;

/// An argument of `W_{-1}`: a real number in `[-1/e, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LambertRegion(f64);

impl LambertRegion {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() || x < BRANCH_POINT || x >= 0.0 {
            return Err(Error::Domain {
                what: "W_{-1}",
                value: x,
            });
        }
        Ok(Self(x))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Evaluates `W_{-1}(x)`, the solution `w <= -1` of `w e^w = x`.
///
/// The root is bracketed by bisection on the log-domain residual
/// `w + ln(-w) - ln(-x)`, which is increasing on `(-inf, -1]` and never
/// underflows, then polished with safeguarded Halley steps on the same
/// residual. The result satisfies `|w e^w - x| <= tol`, otherwise
/// [`Error::NonConvergence`] is returned.
pub fn lambert_w_lower(x: f64, tol: f64) -> Result<f64> {
    let x = LambertRegion::new(x)?.get();
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "W_{-1} tolerance",
            value: tol,
        });
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }

    let target = libm::log(-x);
    let residual = |w: f64| w + libm::log(-w) - target;

    // residual(-1) = -1 - ln(-x) >= 0 on the domain; the lower end must be
    // negative, which holds for -700 unless x is astronomically small.
    let mut hi = -1.0_f64;
    let mut lo = (-700.0_f64).min(2.0 * target);
    if residual(lo) > 0.0 {
        return Err(Error::NonConvergence {
            what: "W_{-1} bracketing",
            iterations: 0,
        });
    }

    // Coarse bisection: get within a relative width of 1e-4 of the root.
    let mut it = 0;
    while hi - lo > 1e-4 * hi.abs() {
        if it == MAX_BISECTIONS {
            return Err(Error::NonConvergence {
                what: "W_{-1} bisection",
                iterations: it,
            });
        }
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        it += 1;
    }

    let mut w = 0.5 * (lo + hi);
    for _ in 0..MAX_HALLEY {
        let r = residual(w);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let d1 = 1.0 + 1.0 / w;
        let d2 = -1.0 / (w * w);
        let denom = 2.0 * d1 * d1 - r * d2;
        let mut next = w - 2.0 * r * d1 / denom;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - w).abs();
        w = next;
        if step <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }

    if (w * libm::exp(w) - x).abs() > tol {
        return Err(Error::NonConvergence {
            what: "W_{-1} refinement",
            iterations: MAX_HALLEY,
        });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisection_oracle(x: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, -1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // w e^w decreases from 0 towards -1/e on (-inf, -1]
            if mid * libm::exp(mid) > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn branch_point_is_exactly_minus_one() {
        assert_eq!(BRANCH_POINT, -libm::exp(-1.0));
        assert_eq!(lambert_w_lower(BRANCH_POINT, DEFAULT_TOL).unwrap(), -1.0);
    }

    #[test]
    fn matches_bisection_oracle() {
        let w = lambert_w_lower(-libm::exp(-2.0), DEFAULT_TOL).unwrap();
        assert!((w - (-3.146_193_220_620_582_5)).abs() < 1e-12);
        assert!((w - bisection_oracle(-libm::exp(-2.0))).abs() < 1e-12);

        let w = lambert_w_lower(-0.1, DEFAULT_TOL).unwrap();
        assert!((w - (-3.577_152_063_957_297)).abs() < 1e-12);
        for &x in &[-0.3678, -0.3, -0.2, -1e-3, -1e-8, -1e-12] {
            let w = lambert_w_lower(x, DEFAULT_TOL).unwrap();
            assert!((w - bisection_oracle(x)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn near_branch_point() {
        let x = BRANCH_POINT + 1e-15;
        let w = lambert_w_lower(x, DEFAULT_TOL).unwrap();
        assert!(w <= -1.0);
        assert!((w * libm::exp(w) - x).abs() <= 1e-15);
    }

    #[test]
    fn tiny_arguments_stay_in_log_domain() {
        let w = lambert_w_lower(-1e-300, DEFAULT_TOL).unwrap();
        assert!(w < -680.0 && w > -700.0);
        let x = -1e-320;
        let w = lambert_w_lower(x, DEFAULT_TOL).unwrap();
        assert!(w < -700.0);
        assert!((w + libm::log(-w) - libm::log(-x)).abs() < 1e-10);
    }

    #[test]
    fn domain_errors() {
        for &x in &[0.0, 0.5, -0.4, BRANCH_POINT - 1e-12, f64::NAN] {
            assert!(matches!(
                lambert_w_lower(x, DEFAULT_TOL),
                Err(Error::Domain { .. })
            ));
        }
        assert!(lambert_w_lower(-0.1, 0.0).is_err());
    }
}
