use chrono::NaiveDate;
use nalgebra::{Matrix2, Vector2};
use oufutures::data::TRADING_DAY;
use oufutures::evaluation::*;
use oufutures::kalman::{run_filter, run_smoother};
use oufutures::model::{init_state, log_futures_price, ModelParams, StateDistribution};
use oufutures::simulation::{maturity_schedule, simulate, MaturityMode};

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

fn fixture(n_dates: usize, n: usize, seed: u64) -> oufutures::FuturesPanel {
    let mats = maturity_schedule(MaturityMode::Rolling, n_dates, n);
    simulate(&theta(), n_dates, TRADING_DAY, &mats, seed).unwrap().panel
}

fn dist(mean: Vector2<f64>) -> StateDistribution {
    StateDistribution::new(mean, Matrix2::identity())
}

#[test]
fn fitted_prices_match_pricing_identity() {
    let th = theta();
    let mats = [0.0, 0.25, 1.0, 3.0];
    let fit = fitted_log_prices(&Vector2::new(0.1, 3.5), &th, &mats).unwrap();
    for (m, f) in mats.iter().zip(&fit) {
        assert_eq!(*f, log_futures_price(&th, 0.1, 3.5, *m).unwrap());
    }
    let zero = fitted_log_prices(&Vector2::zeros(), &th, &[0.0]).unwrap();
    assert_eq!(zero, vec![0.0]);
}

#[test]
fn true_states_reproduce_noise_free_panel() {
    let th = ModelParams { s1: 1e-14, s2: 1e-14, ..theta() };
    let mats = maturity_schedule(MaturityMode::Rolling, 60, 6);
    let sim = simulate(&th, 60, TRADING_DAY, &mats, 4).unwrap();
    let states: Vec<_> = sim.true_states.iter().map(|s| dist(s.as_vector())).collect();
    let fitted = fitted_panel(&sim.panel, &th, &states).unwrap();
    for (t, row) in fitted.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            assert!((cell.unwrap() - sim.panel.log_price(t, j).unwrap()).abs() < 1e-8);
        }
    }
}

#[test]
fn exact_fit_and_constant_offset() {
    let panel = fixture(30, 4, 1);
    let th = theta();
    let split = Split { in_sample: vec![0, 1, 2, 3], out_of_sample: vec![] };
    let mut fit = split_fit(&panel, &th, &split, &init_state(&th)).unwrap();
    let exact: Vec<Vec<Option<f64>>> =
        (0..30).map(|t| panel.log_price_row(t).to_vec()).collect();
    fit.filter_fitted = exact.clone();
    fit.smoother_fitted = exact;
    let delta = -0.0375;
    for row in &mut fit.smoother_fitted {
        row[2] = row[2].map(|v| v + delta);
    }
    let report = rmse_report(&panel, &fit, &split).unwrap();
    for r in &report.rows {
        assert_eq!(r.filter, Some(0.0));
        let expected = if r.contract == 3 { delta.abs() } else { 0.0 };
        assert!((r.smoother.unwrap() - expected).abs() < 1e-15);
    }
}

#[test]
fn missing_column_is_absent_not_zero() {
    let panel = fixture(10, 3, 2);
    let cells: Vec<_> = (0..10).map(|t| (t, 2)).collect();
    let panel = panel.with_missing(&cells).unwrap();
    let th = theta();
    let split = Split { in_sample: vec![0, 1], out_of_sample: vec![2] };
    let (report, _) = evaluate_split(&panel, &th, &split, &init_state(&th)).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[2].filter, None);
    assert!(report.rows.iter().all(|r| r.filter.is_none_or(|v| v >= 0.0)));
}

#[test]
fn out_of_sample_worse_than_in_sample() {
    let th = theta();
    let panel = fixture(1000, 20, 31);
    let split = Split::table_default(20);
    let (report, _) = evaluate_split(&panel, &th, &split, &init_state(&th)).unwrap();
    for smoother in [false, true] {
        let ins = report.mean(SampleLabel::InSample, smoother).unwrap();
        let oos = report.mean(SampleLabel::OutOfSample, smoother).unwrap();
        assert!(oos > ins, "smoother={smoother}: {oos} <= {ins}");
    }
}

#[test]
fn out_of_sample_columns_do_not_feed_the_states() {
    let th = theta();
    let panel = fixture(120, 20, 8);
    let split = Split::table_default(20);
    let wiped = panel
        .map_prices(|_, j, v| if j >= 13 { 0.0 } else { v })
        .unwrap();
    let a = split_fit(&panel, &th, &split, &init_state(&th)).unwrap();
    let b = split_fit(&wiped, &th, &split, &init_state(&th)).unwrap();
    assert_eq!(a.filter_fitted, b.filter_fitted);
    assert_eq!(a.smoother_fitted, b.smoother_fitted);
}

#[test]
fn rmse_ignores_date_order() {
    let panel = fixture(40, 3, 6);
    let th = theta();
    let split = Split { in_sample: vec![0, 1], out_of_sample: vec![2] };
    let fit = split_fit(&panel, &th, &split, &init_state(&th)).unwrap();
    let base = rmse_report(&panel, &fit, &split).unwrap();

    // Reverse the rows of both the panel and the fits.
    let order: Vec<usize> = (0..40).rev().collect();
    let dates: Vec<NaiveDate> = panel.dates().to_vec();
    let prices: Vec<Vec<f64>> = order
        .iter()
        .map(|&t| panel.log_price_row(t).iter().map(|v| v.unwrap()).collect())
        .collect();
    let mats: Vec<Vec<f64>> = order
        .iter()
        .map(|&t| panel.maturity_row(t).iter().map(|v| v.unwrap()).collect())
        .collect();
    let reversed = oufutures::FuturesPanel::from_dense(dates, &prices, &mats, TRADING_DAY).unwrap();
    let mut fit_rev = fit.clone();
    fit_rev.filter_fitted.reverse();
    fit_rev.smoother_fitted.reverse();
    let rev = rmse_report(&reversed, &fit_rev, &split).unwrap();
    for (x, y) in base.rows.iter().zip(&rev.rows) {
        assert!((x.filter.unwrap() - y.filter.unwrap()).abs() < 1e-15);
        assert!((x.smoother.unwrap() - y.smoother.unwrap()).abs() < 1e-15);
    }
}

fn parse_cross_section(csv: &str) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut cols = (Vec::new(), Vec::new(), Vec::new());
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        cols.0.push(v[0]);
        cols.1.push(v[1]);
        cols.2.push(v[2]);
    }
    cols
}

#[test]
fn cross_section_sums_recompute_from_csv() {
    let th = theta();
    let panel = fixture(50, 8, 12);
    let filt = run_filter(&panel, &th, &init_state(&th)).unwrap();
    let smth = run_smoother(&filt).unwrap();
    for t in [0, 17, 49] {
        let cs = cross_section(&panel, &th, &filt.filtered, &smth.smoothed, panel.dates()[t]).unwrap();
        let (obs, f, s) = parse_cross_section(&cs.to_csv());
        let ss = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        assert!((ss(&obs, &f) - cs.s_f).abs() < 1e-12);
        assert!((ss(&obs, &s) - cs.s_s).abs() < 1e-12);
        if t == 49 {
            assert!((cs.s_f - cs.s_s).abs() < 1e-12);
        }
    }
    let missing = NaiveDate::from_ymd_opt(1999, 1, 1).unwrap();
    assert!(cross_section(&panel, &th, &filt.filtered, &smth.smoothed, missing).is_err());
}

#[test]
fn noise_free_cross_section_has_zero_error() {
    let th = ModelParams { s1: 1e-9, s2: 1e-9, ..theta() };
    let mats = maturity_schedule(MaturityMode::Constant, 30, 5);
    let panel = simulate(&th, 30, TRADING_DAY, &mats, 2).unwrap().panel;
    let filt = run_filter(&panel, &th, &init_state(&th)).unwrap();
    let smth = run_smoother(&filt).unwrap();
    let cs = cross_section(&panel, &th, &filt.filtered, &smth.smoothed, panel.dates()[15]).unwrap();
    assert!(cs.s_f < 1e-10 && cs.s_s < 1e-10, "{} {}", cs.s_f, cs.s_s);
}

#[test]
fn term_structure_shapes() {
    use TermStructure::*;
    assert_eq!(classify_term_structure(&[4.0, 3.9, 3.8]), Backwardation);
    assert_eq!(classify_term_structure(&[3.8, 3.9, 4.0]), Contango);
    assert_eq!(classify_term_structure(&[3.8, 4.0, 3.9]), Mixed);
    assert_eq!(classify_term_structure(&[4.0, 4.0, 3.9]), Backwardation);
    assert_eq!(classify_term_structure(&[4.0, 4.0]), Mixed);
}

#[test]
fn report_formats() {
    let th = theta();
    let panel = fixture(20, 3, 3);
    let split: Split = "in=1..2,out=3".parse().unwrap();
    let (report, _) = evaluate_split(&panel, &th, &split, &init_state(&th)).unwrap();
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(3).unwrap().starts_with("C3,out,"));
    let table = report.to_table();
    assert!(table.contains("Filter") && table.contains("Out-of-Sample"));
}
