use oufutures::data::TRADING_DAY;
use oufutures::estimation::*;
use oufutures::kalman::log_likelihood;
use oufutures::model::{InitMode, ModelParams};
use oufutures::simulation::{maturity_schedule, simulate, MaturityMode};
use oufutures::FuturesPanel;
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

fn small_panel() -> FuturesPanel {
    let mats = maturity_schedule(MaturityMode::Constant, 250, 5);
    simulate(&theta(), 250, TRADING_DAY, &mats, 77).unwrap().panel
}

fn small_config() -> FitConfig {
    FitConfig {
        budget: 300,
        top_k: 2,
        seed: 5,
        ..FitConfig::default()
    }
}

#[test]
fn transform_edge_cases() {
    let mut u = to_unconstrained(&theta()).unwrap();
    u[5] = 0.0;
    u[0] = -20.0;
    let th = from_unconstrained(&u).unwrap();
    assert_eq!(th.rho, 0.0);
    assert_eq!(th.kappa, (-20.0f64).exp());
    assert!(th.validate().is_ok());
    u[3] = f64::NAN;
    assert_eq!(from_unconstrained(&u).unwrap_err().category(), "argument");
}

proptest! {
    #[test]
    fn transform_round_trips(
        k in 1e-3f64..10.0, g in 1e-3f64..10.0, m in -1f64..1.0,
        sc in 1e-3f64..2.0, sx in 1e-3f64..2.0, r in -0.99f64..0.99,
        lc in -1f64..1.0, lx in -1f64..1.0, s1 in 1e-4f64..0.5, s2 in 1e-4f64..0.5,
    ) {
        let th = ModelParams::from_array([k, g, m, sc, sx, r, lc, lx, s1, s2]);
        let back = from_unconstrained(&to_unconstrained(&th).unwrap()).unwrap();
        for (a, b) in th.to_array().iter().zip(back.to_array()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn single_point_grid_returns_that_point() {
    let panel = small_panel();
    let config = FitConfig { grid_points: [1; 10], ..small_config() };
    let pts = grid_search(&panel, &config).unwrap();
    assert_eq!(pts.len(), 1);
    let th = pts[0].theta;
    // Midpoint of each range in unconstrained coordinates.
    assert!((th.kappa - (1e-3f64 * 10.0).sqrt()).abs() < 1e-12);
    assert!(th.rho.abs() < 1e-15);
    assert_eq!(th.mu_xi, 0.0);
    assert_eq!(pts[0].loglik, log_likelihood(&panel, &th).unwrap());
}

#[test]
fn grid_is_sorted_and_top_beats_median() {
    let panel = small_panel();
    let config = small_config();
    let all = grid_evaluate(&panel, &config).unwrap();
    assert!(all.len() <= 300 && all.len() > 150);
    assert!(all.windows(2).all(|w| w[0].loglik >= w[1].loglik));
    let median = all[all.len() / 2].loglik;
    let top = grid_search(&panel, &config).unwrap();
    assert_eq!(top.len(), 2);
    assert_eq!(top[0], all[0]);
    assert!(top[0].loglik >= median);
    // The subsample depends on the seed.
    let other = grid_evaluate(&panel, &FitConfig { seed: 6, ..config }).unwrap();
    assert_ne!(
        all.iter().map(|p| p.index).collect::<Vec<_>>(),
        other.iter().map(|p| p.index).collect::<Vec<_>>()
    );
}

#[test]
fn fit_is_deterministic_and_self_consistent() {
    let panel = small_panel();
    let config = small_config();
    let a = fit_mle(&panel, &config).unwrap();
    let b = fit_mle(&panel, &config).unwrap();
    assert_eq!(a, b);

    assert!(a.theta_hat.kappa > a.theta_hat.gamma);
    assert!((a.loglik - log_likelihood(&panel, &a.theta_hat).unwrap()).abs() < 1e-8);
    assert!(a.start_trace.iter().all(|r| a.loglik >= r.final_loglik));
    let best_start = grid_search(&panel, &config).unwrap()[0].loglik;
    assert!(a.loglik >= best_start - 1e-9);
    assert!(a.loglik >= log_likelihood(&panel, &theta()).unwrap() - 1e-6);

    let grad = unconstrained_gradient(&panel, InitMode::Stationary, &a.theta_hat).unwrap();
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm <= 1e-3 * (1.0 + a.loglik.abs()), "gradient norm {norm}");

    let se = a.std_errors.expect("Hessian should be invertible at the optimum");
    assert!(se.iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn level_shift_is_absorbed_by_drift() {
    let panel = small_panel();
    let c = 0.4;
    let shifted = panel.map_prices(|_, _, v| v + c).unwrap();

    // Exact identity: raising mu_xi by gamma*c moves every fitted price by c.
    let th = theta();
    let moved = ModelParams { mu_xi: th.mu_xi + th.gamma * c, ..th };
    let base = log_likelihood(&panel, &th).unwrap();
    assert!((log_likelihood(&shifted, &moved).unwrap() - base).abs() < 1e-6);

    let config = small_config();
    let fit = fit_mle(&panel, &config).unwrap();
    let fit_shift = fit_mle(&shifted, &config).unwrap();
    assert!(
        (fit.loglik - fit_shift.loglik).abs() < 1e-6,
        "{} vs {}",
        fit.loglik,
        fit_shift.loglik
    );
    let d_mu = fit_shift.theta_hat.mu_xi - fit.theta_hat.mu_xi;
    assert!(d_mu > 0.0);
    assert!((d_mu - fit.theta_hat.gamma * c).abs() < 1e-3 * (1.0 + d_mu.abs()), "{d_mu}");
}

#[test]
fn rejects_tiny_panels_and_bad_configs() {
    let panel = small_panel();
    let one_col = panel.select_contracts(&[0]).unwrap();
    assert_eq!(fit_mle(&one_col, &small_config()).unwrap_err().category(), "argument");
    let mut bad = small_config();
    bad.bounds.lower[0] = 20.0;
    assert_eq!(grid_search(&panel, &bad).unwrap_err().category(), "argument");
    let zero = FitConfig { grid_points: [0; 10], ..small_config() };
    assert!(grid_search(&panel, &zero).is_err());
}
