use dpsgd_core::accountant::{
    best_dp, default_alpha_grid, optimal_beta, rdp_to_dp, BaselineParams, BoundOptions, Family,
    MechanismConfig,
};
use proptest::prelude::*;

fn mech() -> impl Strategy<Value = MechanismConfig> {
    (
        2u64..2000,
        0.0f64..1.0,
        1e-3f64..2.0,
        0.05f64..20.0,
        0.01f64..50.0,
        0.1f64..50.0,
        1u64..20_000,
        0.01f64..20.0,
    )
        .prop_map(|(n, bf, eta, c, d, sigma, t, l)| MechanismConfig {
            n,
            b: 1 + (bf * (n - 1) as f64) as u64,
            eta,
            clip_c: c,
            diameter_d: Some(d),
            sigma_dp: sigma,
            t_iters: t,
            smooth_l: l,
            dim: 1,
        })
}

fn opts() -> BoundOptions {
    BoundOptions {
        baseline: BaselineParams::new(2.0, 1.0),
        ..BoundOptions::default()
    }
}

fn eps(f: Family, cfg: &MechanismConfig, alpha: f64) -> f64 {
    f.evaluate(cfg, alpha, &opts()).unwrap().epsilon
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn nondecreasing_in_t(cfg in mech(), alpha in 1.01f64..100.0, extra in 1u64..1000) {
        for f in Family::ALL {
            let a = eps(f, &cfg, alpha);
            let b = eps(f, &cfg.with_t(cfg.t_iters + extra), alpha);
            prop_assert!(b >= a * (1.0 - 1e-12), "{f}: {a} then {b}");
        }
    }

    #[test]
    fn nonincreasing_in_sigma(cfg in mech(), alpha in 1.01f64..100.0, k in 1.0f64..10.0) {
        for f in Family::ALL {
            let a = eps(f, &cfg, alpha);
            let b = eps(f, &cfg.with_sigma(cfg.sigma_dp * k), alpha);
            prop_assert!(b <= a * (1.0 + 1e-12), "{f}: {a} then {b}");
        }
    }

    #[test]
    fn dc_never_exceeds_gc(cfg in mech(), alpha in 1.01f64..100.0) {
        prop_assert!(eps(Family::Dc, &cfg, alpha) <= eps(Family::GcLinear, &cfg, alpha));
    }

    #[test]
    fn dc_shrinks_with_diameter(cfg in mech(), alpha in 1.01f64..100.0, k in 0.0f64..1.0) {
        let d = cfg.diameter_d.unwrap();
        let small = cfg.with_diameter(Some(d * k));
        prop_assert!(eps(Family::Dc, &small, alpha) <= eps(Family::Dc, &cfg, alpha) * (1.0 + 1e-12));
    }

    #[test]
    fn optimal_beta_in_unit_interval(cfg in mech(), alpha in 1.01f64..100.0) {
        let b = optimal_beta(&cfg, alpha).unwrap();
        prop_assert!(b > 0.0 && b < 1.0);
    }

    #[test]
    fn conversion_exceeds_rdp(e in 0.0f64..100.0, alpha in 1.01f64..500.0, delta in 1e-12f64..0.5) {
        let dp = rdp_to_dp(e, alpha, delta).unwrap();
        prop_assert!(dp >= e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn best_dp_is_grid_minimum(cfg in mech(), delta in 1e-9f64..1e-2) {
        let grid = default_alpha_grid();
        let best = best_dp(&cfg, Family::Dc, &opts(), delta, &grid).unwrap();
        for &a in &grid {
            let e = rdp_to_dp(eps(Family::Dc, &cfg, a), a, delta).unwrap();
            prop_assert!(best.epsilon_dp <= e);
        }
    }
}
