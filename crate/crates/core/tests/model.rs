use nalgebra::Matrix2;
use oufutures::model::{
    build_measurement, build_transition, compute_a, init_state, log_futures_price,
    variance_adjustment, ModelParams,
};
use oufutures_oracle::{a_by_quadrature, a_terms_by_quadrature, euler_step_covariance};
use proptest::prelude::*;

fn theta() -> ModelParams {
    ModelParams {
        kappa: 1.5,
        gamma: 0.1,
        mu_xi: 0.05,
        sigma_chi: 0.3,
        sigma_xi: 0.2,
        rho: 0.4,
        lambda_chi: 0.02,
        lambda_xi: 0.01,
        s1: 0.02,
        s2: 0.01,
    }
}

// Frozen from the Simpson-quadrature oracle (20 000 intervals per summand).
const A_AT_ONE: f64 = 7.205843915102597e-2;
const A_AT_HALF: f64 = 4.190248890201381e-2;
const LOG_F_EXAMPLE: f64 = 3.418442129928614;

#[test]
fn a_matches_frozen_quadrature() {
    let th = theta();
    assert!((compute_a(&th, 1.0).unwrap() - A_AT_ONE).abs() < 1e-14);
    assert!((compute_a(&th, 0.5).unwrap() - A_AT_HALF).abs() < 1e-14);
    // And the oracle still reproduces the frozen value.
    assert!((a_by_quadrature(&th, 1.0) - A_AT_ONE).abs() < 1e-13);
    assert_eq!(a_terms_by_quadrature(&th, 0.0), [0.0; 6]);
}

#[test]
fn log_futures_price_composes_pieces() {
    let th = theta();
    let p = log_futures_price(&th, 0.1, 3.5, 0.5).unwrap();
    assert!((p - LOG_F_EXAMPLE).abs() < 1e-14);
    let direct = (-0.75f64).exp() * 0.1 + (-0.05f64).exp() * 3.5 + A_AT_HALF;
    assert!((p - direct).abs() < 1e-14);
}

#[test]
fn a_against_quadrature_over_maturities() {
    let th = theta();
    for t in [1e-4, 0.01, 0.25, 1.0, 3.0, 10.0] {
        let a = compute_a(&th, t).unwrap();
        assert!((a - a_by_quadrature(&th, t)).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn measurement_columns_match_pieces() {
    let th = theta();
    let mats: Vec<f64> = (1..=20).map(|i| i as f64 / 12.0).collect();
    let m = build_measurement(&th, &mats).unwrap();
    for (i, &t) in mats.iter().enumerate() {
        assert!((m.d[i] - a_by_quadrature(&th, t)).abs() < 1e-12);
        assert_eq!(m.f[(0, i)], (-th.kappa * t).exp());
        assert_eq!(m.f[(1, i)], (-th.gamma * t).exp());
        let s = if i == 0 { th.s1 } else { th.s2 };
        assert_eq!(m.v_diag[i], s * s);
        assert!(m.f[(0, i)] > 0.0 && m.f[(0, i)] <= 1.0);
    }
    let v = m.v();
    for i in 0..20 {
        for j in 0..20 {
            if i != j {
                assert_eq!(v[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn init_state_is_long_step_limit() {
    let th = theta();
    let w = build_transition(&th, 1e3).unwrap().w;
    let init = init_state(&th);
    assert!((w - init.cov).abs().max() < 1e-12);
    assert_eq!(init.mean[1], th.mu_xi / th.gamma);
}

#[test]
fn transition_covariance_against_euler_paths() {
    let th = theta();
    let dt = 1.0 / 252.0;
    let w = build_transition(&th, dt).unwrap().w;
    let (cov, se) = euler_step_covariance(&th, dt, 1_000_000, 100, 7);
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let z = (cov[(i, j)] - w[(i, j)]) / se[(i, j)];
        assert!(z.abs() < 3.0, "entry ({i},{j}): exact {} vs mc {} (z = {z})", w[(i, j)], cov[(i, j)]);
    }
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (0.01f64..5.0, 0.005f64..2.0, -0.5f64..0.5, 0.01f64..1.0, 0.01f64..1.0),
        (-0.99f64..0.99, -0.5f64..0.5, -0.5f64..0.5, 0.001f64..0.1, 0.001f64..0.1),
    )
        .prop_map(|((k, g, mu, sc, sx), (rho, lc, lx, s1, s2))| ModelParams {
            kappa: k,
            gamma: g,
            mu_xi: mu,
            sigma_chi: sc,
            sigma_xi: sx,
            rho,
            lambda_chi: lc,
            lambda_xi: lx,
            s1,
            s2,
        })
}

proptest! {
    #[test]
    fn a_is_zero_at_origin_and_continuous(th in params(), t in 0.0f64..5.0) {
        prop_assert_eq!(compute_a(&th, 0.0).unwrap(), 0.0);
        let a = compute_a(&th, t).unwrap();
        let a_near = compute_a(&th, t + 1e-9).unwrap();
        prop_assert!((a - a_near).abs() < 1e-8);
    }

    #[test]
    fn variance_part_non_decreasing_for_nonnegative_rho(th in params(), t in 0.0f64..10.0, dt in 0.0f64..1.0) {
        let th = ModelParams { rho: th.rho.abs(), ..th };
        prop_assert!(variance_adjustment(&th, t + dt) >= variance_adjustment(&th, t) - 1e-15);
    }

    #[test]
    fn transition_covariance_is_positive_definite(th in params(), log_dt in -8.0f64..1.0) {
        let dt = 10f64.powf(log_dt);
        let tr = build_transition(&th, dt).unwrap();
        prop_assert!(tr.w.cholesky().is_some());
        prop_assert_eq!(tr.w[(0, 1)], tr.w[(1, 0)]);
        let corr = tr.w[(0, 1)] / (tr.w[(0, 0)] * tr.w[(1, 1)]).sqrt();
        prop_assert!(corr > -1.0 && corr < 1.0);
        prop_assert_eq!(tr.c[0], 0.0);
        for i in 0..2 {
            prop_assert!(tr.g[(i, i)] > 0.0 && tr.g[(i, i)] < 1.0);
        }
    }

    #[test]
    fn decay_strictly_decreases_with_dt(th in params(), dt in 1e-4f64..2.0) {
        let a = build_transition(&th, dt).unwrap().g;
        let b = build_transition(&th, dt * 1.5).unwrap().g;
        prop_assert!(b[(0, 0)] < a[(0, 0)]);
        prop_assert!(b[(1, 1)] < a[(1, 1)]);
    }

    #[test]
    fn price_linear_in_state(th in params(), chi in -1.0f64..1.0, xi in 2.0f64..5.0, t in 0.0f64..3.0) {
        let base = log_futures_price(&th, 0.0, 0.0, t).unwrap();
        let p = log_futures_price(&th, chi, xi, t).unwrap();
        let m = build_measurement(&th, &[t]).unwrap();
        let expected = base + m.f[(0, 0)] * chi + m.f[(1, 0)] * xi;
        prop_assert!((p - expected).abs() < 1e-12);
    }
}

#[test]
fn transition_correlation_limits() {
    let th = theta();
    let corr = |w: Matrix2<f64>| w[(0, 1)] / (w[(0, 0)] * w[(1, 1)]).sqrt();
    let short = build_transition(&th, 1e-9).unwrap().w;
    assert!((corr(short) - th.rho).abs() < 1e-6);
    let long = build_transition(&th, 1e4).unwrap().w;
    let limit = th.rho * 2.0 * (th.kappa * th.gamma).sqrt() / (th.kappa + th.gamma);
    assert!((corr(long) - limit).abs() < 1e-12);
}
