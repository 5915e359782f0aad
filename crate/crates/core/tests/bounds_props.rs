use nss_core::bounds::{lambert_w_lower, BRANCH_POINT, DEFAULT_TOL};
use nss_core::bounds::{bound_b, down_cross_survival_bound, up_cross_survival_bound, BoundSet, LevelPair};
use proptest::prelude::*;

fn levels() -> impl Strategy<Value = LevelPair> {
    (0.05f64..10.0, 0.01f64..5.0, 1.01f64..100.0, 0.001f64..0.999).prop_map(|(c, g, mult, beta)| {
        LevelPair::from_beta(beta, g / c * mult, c, g).unwrap()
    })
}

proptest! {
    #[test]
    fn lambert_inverts(x in BRANCH_POINT..-1e-300) {
        let w = lambert_w_lower(x, DEFAULT_TOL).unwrap();
        prop_assert!(w <= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= DEFAULT_TOL);
    }

    #[test]
    fn survival_bounds_are_monotone_and_in_range(lv in levels(), a in 0.0f64..20.0, da in 0.0f64..5.0) {
        let (s, t) = (a, a + da);
        for f in [up_cross_survival_bound, down_cross_survival_bound] {
            let (fs, ft) = (f(s, &lv), f(t, &lv));
            prop_assert!((0.0..=1.0).contains(&fs));
            prop_assert!(ft <= fs);
        }
    }

    #[test]
    fn ratio_never_beats_the_optimum(lv in levels()) {
        let set = BoundSet::new(lv);
        prop_assert!(set.beta > 0.0 && set.beta < 1.0);
        prop_assert!(set.ratio_bound <= set.optimal_ratio() + 1e-12);
        prop_assert!(set.t_uc > 0.0 && set.t_dc > 0.0);
    }

    #[test]
    fn occupancy_bound_is_monotone(r in 0.01f64..100.0, dr in 0.0f64..10.0) {
        let a1 = |r: f64| 0.5 * r * r;
        let lo = bound_b(r, 1.0, 0.5, a1).unwrap();
        let hi = bound_b(r + dr, 1.0, 0.5, a1).unwrap();
        prop_assert!((0.0..1.0).contains(&lo));
        prop_assert!(hi >= lo);
    }
}
