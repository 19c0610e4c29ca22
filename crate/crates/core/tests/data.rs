use oufutures::data::{load_panel, save_panel, save_panel_with, PanelFormat, PriceScale, TRADING_DAY};
use oufutures::model::ModelParams;
use oufutures::simulation::{maturity_schedule, simulate, MaturityMode};
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

fn assert_close(a: &oufutures::FuturesPanel, b: &oufutures::FuturesPanel, tol: f64) {
    assert_eq!(a.dates(), b.dates());
    assert_eq!(a.n_contracts(), b.n_contracts());
    for t in 0..a.n_dates() {
        for j in 0..a.n_contracts() {
            match (a.log_price(t, j), b.log_price(t, j)) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= tol, "({t},{j}) {x} vs {y}"),
                (x, y) => assert_eq!(x, y),
            }
            assert_eq!(a.maturity(t, j), b.maturity(t, j));
        }
    }
}

#[test]
fn simulated_fixture_round_trips() {
    let mats = maturity_schedule(MaturityMode::Rolling, 250, 8);
    let panel = simulate(&theta(), 250, TRADING_DAY, &mats, 5).unwrap().panel;
    let panel = panel.with_missing(&[(3, 7), (10, 0), (10, 1)]).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("levels.csv");
    save_panel(&panel, &path).unwrap();
    let back = load_panel(&path, &PanelFormat::default()).unwrap();
    assert_close(&panel, &back, 1e-12);

    let path = dir.path().join("logs.csv");
    save_panel_with(&panel, &path, PriceScale::Log, Some("seed=5")).unwrap();
    let fmt = PanelFormat { prices: PriceScale::Log, dt: TRADING_DAY };
    let back = load_panel(&path, &fmt).unwrap();
    assert_eq!(back, panel);
}

#[test]
fn missing_file_is_io_error() {
    let err = load_panel("/definitely/not/here.csv", &PanelFormat::default()).unwrap_err();
    assert_eq!(err.category(), "io");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn log_scale_round_trip_is_exact(seed in 0u64..1000, n_dates in 1usize..20, n in 1usize..6) {
        let mats = maturity_schedule(MaturityMode::Rolling, n_dates, n);
        let panel = simulate(&theta(), n_dates, TRADING_DAY, &mats, seed).unwrap().panel;
        let mut buf = Vec::new();
        oufutures::data::write_panel(&mut buf, &panel, PriceScale::Log, None).unwrap();
        let fmt = PanelFormat { prices: PriceScale::Log, dt: TRADING_DAY };
        let back = oufutures::data::read_panel(buf.as_slice(), &fmt).unwrap();
        prop_assert_eq!(back, panel);
    }
}
