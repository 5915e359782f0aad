//! Closed-form occupancy and crossing-time bounds.
//!
//! For an eNSS system with dissipation rate `c` and noise gain `gamma_max`,
//! and two Lyapunov levels `gamma_max / c < v0 < v1`, the up-cross time of a
//! loop (rise from `v0` to `v1`) is stochastically bounded below by a law with
//! mean `t_uc`, and the down-cross time (return to `v0`) is bounded above by
//! a law with mean `t_dc`. The fraction of time spent below `v1` is then at
//! least `t_uc / (t_uc + t_dc)`, which is maximised by the level ratio
//! `beta* = -1 / W_{-1}(-e^{-2})`.

mod lambert;

pub use lambert::{lambert_w_lower, LambertRegion, BRANCH_POINT, DEFAULT_TOL};

use alloc::format;

use crate::error::{Error, Result};
use crate::slln::DominatingLaw;

/// Tolerance used for round-trip identities such as `b(q_k) = k`.
pub const ROUND_TRIP_TOL: f64 = 1e-9;

/// `W_{-1}(-e^{-2})`, the constant that fixes the optimal level ratio.
pub fn optimal_w() -> f64 {
    lambert_w_lower(-libm::exp(-2.0), DEFAULT_TOL)
        .expect("-e^-2 lies inside the domain of W_{-1}")
}

/// Optimal normalised level ratio `beta* = -1 / W_{-1}(-e^{-2}) ≈ 0.3178`.
pub fn beta_star() -> f64 {
    -1.0 / optimal_w()
}

/// Lyapunov levels of a loop together with the system constants they are
/// measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPair {
    pub v0: f64,
    pub v1: f64,
    pub c: f64,
    pub gamma_max: f64,
}

impl LevelPair {
    pub fn new(v0: f64, v1: f64, c: f64, gamma_max: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidLevels(format!("c = {c} must be positive")));
        }
        if !(gamma_max >= 0.0) || !gamma_max.is_finite() {
            return Err(Error::InvalidLevels(format!(
                "gamma_max = {gamma_max} must be non-negative"
            )));
        }
        let floor = gamma_max / c;
        if !(floor < v0 && v0 < v1) || !v1.is_finite() {
            return Err(Error::InvalidLevels(format!(
                "need gamma_max/c < v0 < v1, got {floor} < {v0} < {v1}"
            )));
        }
        Ok(Self {
            v0,
            v1,
            c,
            gamma_max,
        })
    }

    /// Levels with `v0` placed at normalised ratio `beta` below `v1`.
    pub fn from_beta(beta: f64, v1: f64, c: f64, gamma_max: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidLevels(format!("beta = {beta} not in (0, 1)")));
        }
        let floor = gamma_max / c;
        Self::new(floor + beta * (v1 - floor), v1, c, gamma_max)
    }

    /// Levels at the optimal ratio `beta*`.
    pub fn optimal(v1: f64, c: f64, gamma_max: f64) -> Result<Self> {
        Self::from_beta(beta_star(), v1, c, gamma_max)
    }

    /// `gamma_max / c`, the level the expected Lyapunov value relaxes to.
    pub fn floor(&self) -> f64 {
        self.gamma_max / self.c
    }

    pub fn beta(&self) -> f64 {
        let f = self.floor();
        (self.v0 - f) / (self.v1 - f)
    }
}

/// `t_uc`: mean of the law bounding up-cross times from below.
pub fn expected_up_cross(levels: &LevelPair) -> f64 {
    let LevelPair { v0, v1, c, .. } = *levels;
    let f = levels.floor();
    (v1 - v0) / (v1 - f) * libm::log(v1 / f) / c
}

/// `t_dc`: mean of the law bounding down-cross times from above.
pub fn expected_down_cross(levels: &LevelPair) -> f64 {
    let f = levels.floor();
    (1.0 + libm::log((levels.v1 - f) / (levels.v0 - f))) / levels.c
}

/// Lower bound on `P{up-cross time > s}` for every loop after the first.
pub fn up_cross_survival_bound(s: f64, levels: &LevelPair) -> f64 {
    if s < 0.0 {
        return 1.0;
    }
    let LevelPair { v0, v1, c, .. } = *levels;
    let f = levels.floor();
    (v1 - v0) / (v1 - f + f * libm::exp(c * s))
}

/// Threshold below which the down-cross survival bound is vacuous.
pub fn down_cross_threshold(levels: &LevelPair) -> f64 {
    let f = levels.floor();
    libm::log((levels.v1 - f) / (levels.v0 - f)) / levels.c
}

/// Upper bound on `P{down-cross time >= s}`.
pub fn down_cross_survival_bound(s: f64, levels: &LevelPair) -> f64 {
    let f = levels.floor();
    let ratio = (levels.v1 - f) / (levels.v0 - f);
    (ratio * libm::exp(-levels.c * s)).min(1.0)
}

/// Occupancy lower bound `b(r)` on the long-run fraction of time with
/// `‖x‖ < r`.
///
/// Returns 0 at and below the domain edge `α1(r) <= gamma_max / c`, where the
/// bound says nothing, and 1 for a noiseless system.
pub fn bound_b(r: f64, c: f64, gamma_max: f64, alpha1: impl Fn(f64) -> f64) -> Result<f64> {
    let a = alpha1(r);
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain {
            what: "b(r): alpha1(r) must be positive",
            value: r,
        });
    }
    check_constants(c, gamma_max)?;
    if gamma_max == 0.0 {
        return Ok(1.0);
    }
    let floor = gamma_max / c;
    if a <= floor {
        return Ok(0.0);
    }
    let log_ratio = libm::log(a / floor);
    Ok(log_ratio / (log_ratio - optimal_w()))
}

/// Radius `q_k` with `b(q_k) = k`.
pub fn fractile_q(
    k: f64,
    c: f64,
    gamma_max: f64,
    alpha1_inv: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Domain {
            what: "fractile level k",
            value: k,
        });
    }
    check_constants(c, gamma_max)?;
    let level = gamma_max / c * libm::exp(-k / (1.0 - k) * optimal_w());
    Ok(alpha1_inv(level))
}

fn check_constants(c: f64, gamma_max: f64) -> Result<()> {
    if !(c > 0.0) || !(gamma_max >= 0.0) {
        return Err(Error::InvalidLevels(format!(
            "need c > 0 and gamma_max >= 0, got c = {c}, gamma_max = {gamma_max}"
        )));
    }
    Ok(())
}

/// Derived quantities for one choice of levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub levels: LevelPair,
    pub t_uc: f64,
    pub t_dc: f64,
    /// `t_uc / (t_uc + t_dc)`: lower bound on the time fraction with `V < v1`.
    pub ratio_bound: f64,
    pub beta: f64,
    pub beta_star: f64,
}

impl BoundSet {
    pub fn new(levels: LevelPair) -> Self {
        let t_uc = expected_up_cross(&levels);
        let t_dc = expected_down_cross(&levels);
        Self {
            levels,
            t_uc,
            t_dc,
            ratio_bound: t_uc / (t_uc + t_dc),
            beta: levels.beta(),
            beta_star: beta_star(),
        }
    }

    /// Best achievable `ratio_bound` over all `v0` for this `v1`.
    pub fn optimal_ratio(&self) -> f64 {
        let log_ratio = libm::log(self.levels.v1 / self.levels.floor());
        log_ratio / (log_ratio - optimal_w())
    }
}

/// Law of `X̃`, the stochastic lower bound of up-cross times.
///
/// It has an atom at 0 and, when `gamma_max = 0`, another at `+inf`.
#[derive(Debug, Clone, Copy)]
pub struct UpCrossLaw(pub LevelPair);

impl DominatingLaw for UpCrossLaw {
    fn cdf(&self, s: f64) -> f64 {
        1.0 - up_cross_survival_bound(s, &self.0)
    }
}

/// Law of `X̂`, the stochastic upper bound of down-cross times.
#[derive(Debug, Clone, Copy)]
pub struct DownCrossLaw(pub LevelPair);

impl DominatingLaw for DownCrossLaw {
    fn cdf(&self, s: f64) -> f64 {
        1.0 - down_cross_survival_bound(s, &self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_levels() -> LevelPair {
        LevelPair::new(1.0, 2.0, 1.0, 0.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn beta_star_value() {
        let b = beta_star();
        assert!(close(b, 0.317_844_432_899_372_7, 1e-12));
        assert!(b > 0.0 && b < 1.0);
    }

    #[test]
    fn ratio_derivative_changes_sign_at_beta_star() {
        // t_dc / t_uc as a function of beta for v1 = 2, c = 1, gamma_max = 0.5
        let ratio = |beta: f64| {
            let l = LevelPair::from_beta(beta, 2.0, 1.0, 0.5).unwrap();
            expected_down_cross(&l) / expected_up_cross(&l)
        };
        let b = beta_star();
        let h = 1e-5;
        let slope = |x: f64| (ratio(x + h) - ratio(x - h)) / (2.0 * h);
        assert!(slope(b - 0.01) < 0.0);
        assert!(slope(b + 0.01) > 0.0);
        assert!(slope(b).abs() < 1e-6);
    }

    #[test]
    fn cross_time_expectations() {
        let l = example_levels();
        assert!(close(expected_up_cross(&l), 0.924_196_240_746_593_7, 1e-12));
        assert!(close(expected_down_cross(&l), 2.098_612_288_668_11, 1e-12));

        let l2 = LevelPair::new(1.0, 2.0, 2.0, 1.0).unwrap();
        assert!(close(expected_up_cross(&l2), 0.462_098_120_373_296_84, 1e-12));
        assert!(close(expected_down_cross(&l2), 1.049_306_144_334_055, 1e-12));

        let thin = LevelPair::new(2.0 - 1e-12, 2.0, 1.0, 0.5).unwrap();
        assert!(expected_up_cross(&thin) < 1e-11);
        assert!(close(expected_down_cross(&thin), 1.0, 1e-11));
    }

    #[test]
    fn level_validation() {
        assert!(LevelPair::new(0.4, 2.0, 1.0, 0.5).is_err());
        assert!(LevelPair::new(1.0, 1.0, 1.0, 0.5).is_err());
        assert!(LevelPair::new(1.0, 2.0, 0.0, 0.5).is_err());
        assert!(LevelPair::new(1.0, 2.0, 1.0, -0.1).is_err());
        assert!(LevelPair::from_beta(1.0, 2.0, 1.0, 0.5).is_err());
        let l = LevelPair::optimal(2.0, 1.0, 0.5).unwrap();
        assert!(close(l.v0, 0.5 + 1.5 * beta_star(), 1e-15));
        assert!(close(l.beta(), beta_star(), 1e-15));
    }

    #[test]
    fn example_b_and_q() {
        let alpha1 = |r: f64| 0.5 * r * r;
        let alpha1_inv = |v: f64| libm::sqrt(2.0 * v);
        assert_eq!(bound_b(1.0, 1.0, 0.5, alpha1).unwrap(), 0.0);
        assert_eq!(bound_b(0.5, 1.0, 0.5, alpha1).unwrap(), 0.0);
        let b_e = bound_b(core::f64::consts::E, 1.0, 0.5, alpha1).unwrap();
        assert!(close(b_e, 0.388_636_787_283_089_76, 1e-12));

        let q = fractile_q(1.0 / 3.0, 1.0, 0.5, alpha1_inv).unwrap();
        assert!(close(q, 2.195_804_084_931_017, 1e-12));
        assert!(close(bound_b(q, 1.0, 0.5, alpha1).unwrap(), 1.0 / 3.0, 1e-12));
        let q_half = fractile_q(0.5, 1.0, 0.5, alpha1_inv).unwrap();
        assert!(close(q_half, 4.821_555_579_399_741_6, 1e-11));
        let q_small = fractile_q(1e-12, 1.0, 0.5, alpha1_inv).unwrap();
        assert!(close(q_small, 1.0, 1e-9));
    }

    #[test]
    fn b_errors_and_limits() {
        let alpha1 = |r: f64| 0.5 * r * r;
        assert!(bound_b(0.0, 1.0, 0.5, alpha1).is_err());
        assert!(bound_b(2.0, 1.0, 0.5, |_| f64::NAN).is_err());
        assert_eq!(bound_b(2.0, 1.0, 0.0, alpha1).unwrap(), 1.0);
        assert!(bound_b(1e150, 1.0, 0.5, alpha1).unwrap() > 0.99);
        for k in [0.0, 1.0, -0.5, 1.5] {
            assert!(fractile_q(k, 1.0, 0.5, libm::sqrt).is_err());
        }
    }

    #[test]
    fn survival_bounds() {
        let l = example_levels();
        assert!(close(up_cross_survival_bound(0.0, &l), 0.5, 1e-15));
        assert_eq!(up_cross_survival_bound(-1.0, &l), 1.0);
        assert!(up_cross_survival_bound(1e6, &l) < 1e-300);

        assert_eq!(down_cross_survival_bound(0.0, &l), 1.0);
        assert!(close(down_cross_survival_bound(libm::log(3.0), &l), 1.0, 1e-15));
        assert!(close(down_cross_survival_bound(2.0, &l), 0.406_005_849_709_838_1, 1e-15));
        assert!(close(down_cross_threshold(&l), libm::log(3.0), 1e-15));
    }

    #[test]
    fn optimal_ratio_matches_closed_form() {
        let set = BoundSet::new(LevelPair::optimal(2.0, 1.0, 0.5).unwrap());
        assert!(close(set.ratio_bound, set.optimal_ratio(), 1e-12));
        let other = BoundSet::new(LevelPair::from_beta(0.5, 2.0, 1.0, 0.5).unwrap());
        assert!(other.ratio_bound < set.ratio_bound);
    }

    #[test]
    fn laws_are_distribution_functions() {
        let l = example_levels();
        let up = UpCrossLaw(l);
        assert_eq!(up.cdf(-0.5), 0.0);
        assert!(close(up.cdf(0.0), 0.5, 1e-15));
        let down = DownCrossLaw(l);
        assert_eq!(down.cdf(0.5), 0.0);
        assert!(close(down.cdf(2.0), 1.0 - 3.0 * libm::exp(-2.0), 1e-15));
    }
}
