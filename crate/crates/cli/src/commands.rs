use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use oufutures::data::write_panel;
use oufutures::evaluation::{cross_section, evaluate_split, fitted_log_prices, SampleLabel, Split};
use oufutures::simulation::maturity_schedule;
use oufutures::{
    fit_mle, load_panel, run_filter, run_smoother, simulate as simulate_panel, Error, FuturesPanel,
    ModelParams, PanelFormat, PriceScale, Result, StateDistribution,
};

use crate::output::{header, num, theta_lines, OutputDir};
use crate::{EvaluateArgs, FitArgs, ForecastArgs, SimulateArgs, StateArgs};

fn read_theta(path: &Path) -> Result<ModelParams> {
    std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?
        .parse()
}

fn read_panel(path: &Path, dt: f64) -> Result<FuturesPanel> {
    load_panel(
        path,
        &PanelFormat {
            prices: PriceScale::Level,
            dt,
        },
    )
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let theta = read_theta(&args.theta)?;
    let mats = maturity_schedule(args.maturity_mode, args.n_dates, args.n_contracts);
    let sim = simulate_panel(&theta, args.n_dates, args.common.dt, &mats, args.seed)?;
    let out = OutputDir::create(&args.common.output_dir)?;
    let head = header(Some(args.seed), Some(&theta));

    let mut buf = Vec::new();
    write_panel(&mut buf, &sim.panel, PriceScale::Level, Some(&head))?;
    let path = out.path("panel.csv");
    std::fs::write(&path, buf)?;
    println!("wrote {}", path.display());

    let mut states = String::from("date,chi,xi\n");
    for (date, s) in sim.panel.dates().iter().zip(&sim.true_states) {
        let _ = writeln!(states, "{date},{},{}", num(s.chi), num(s.xi));
    }
    out.write("states.csv", &head, &states)?;
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let config = args.config()?;
    let panel = read_panel(&args.input, args.common.dt)?;
    let result = fit_mle(&panel, &config)?;
    let out = OutputDir::create(&args.common.output_dir)?;
    let head = header(Some(args.seed), Some(&result.theta_hat));

    let mut summary = theta_lines(&result.theta_hat);
    let _ = writeln!(summary, "loglik={}", num(result.loglik));
    let _ = writeln!(summary, "converged={}", result.converged);
    let _ = writeln!(summary, "n_starts={}", result.n_starts);
    match &result.std_errors {
        Some(se) => {
            for (name, v) in ModelParams::NAMES.iter().zip(se) {
                let _ = writeln!(summary, "se_{name}={}", num(*v));
            }
        }
        None => summary.push_str("se=unavailable\n"),
    }
    for w in &result.warnings {
        let _ = writeln!(summary, "warning={w}");
        eprintln!("warning: {w}");
    }
    out.write("fit.txt", &head, &summary)?;
    // Full precision: rounding could push a parameter onto its bound.
    out.write("theta_hat.txt", &head, &result.theta_hat.to_string())?;

    let json = serde_json::json!({ "provenance": head, "result": result });
    let json = serde_json::to_string_pretty(&json).map_err(|e| Error::Argument(e.to_string()))?;
    let path = out.path("fit.json");
    std::fs::write(&path, json + "\n")?;
    println!("wrote {}", path.display());
    print!("{summary}");
    Ok(())
}

fn states_csv(panel: &FuturesPanel, states: &[StateDistribution]) -> String {
    let mut s = String::from("date,chi,xi,var_chi,cov_chi_xi,var_xi\n");
    for (date, st) in panel.dates().iter().zip(states) {
        let _ = writeln!(
            s,
            "{date},{},{},{},{},{}",
            num(st.mean[0]),
            num(st.mean[1]),
            num(st.cov[(0, 0)]),
            num(st.cov[(0, 1)]),
            num(st.cov[(1, 1)])
        );
    }
    s
}

pub fn states(args: &StateArgs, smooth: bool) -> Result<()> {
    let theta = read_theta(&args.theta)?;
    let panel = read_panel(&args.input, args.common.dt)?;
    let filt = run_filter(&panel, &theta, &args.init.prior(&theta))?;
    let out = OutputDir::create(&args.common.output_dir)?;
    let head = header(None, Some(&theta));
    if smooth {
        let smth = run_smoother(&filt)?;
        out.write("smoothed.csv", &head, &states_csv(&panel, &smth.smoothed))?;
    } else {
        out.write("filtered.csv", &head, &states_csv(&panel, &filt.filtered))?;
    }
    let line = format!("loglik={}\n", num(filt.loglik));
    out.write("loglik.txt", &head, &line)?;
    print!("{line}");
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let theta = read_theta(&args.theta)?;
    let panel = read_panel(&args.input, args.common.dt)?;
    let split = args
        .split
        .clone()
        .unwrap_or_else(|| Split::table_default(panel.n_contracts()));
    let (report, fit) = evaluate_split(&panel, &theta, &split, &args.init.prior(&theta))?;
    let out = OutputDir::create(&args.common.output_dir)?;
    let head = header(None, Some(&theta));
    out.write("rmse.csv", &head, &report.to_csv())?;
    out.write("rmse.txt", &head, &report.to_table())?;

    let dates = if args.dates.is_empty() {
        panel.dates().last().copied().into_iter().collect()
    } else {
        args.dates.clone()
    };
    let mut summary = String::from("date,s_f,s_s,shape\n");
    for date in dates {
        let cs = cross_section(&panel, &theta, &fit.filter.filtered, &fit.smoother.smoothed, date)?;
        // Full precision so the sums of squares recompute from the file.
        out.write(&format!("cross_section_{date}.csv"), &head, &cs.to_csv())?;
        let _ = writeln!(summary, "{date},{},{},{}", num(cs.s_f), num(cs.s_s), cs.shape());
    }
    out.write("cross_sections.csv", &head, &summary)?;

    for (label, name) in [(SampleLabel::InSample, "in"), (SampleLabel::OutOfSample, "out")] {
        for (smoother, est) in [(false, "filter"), (true, "smoother")] {
            if let Some(m) = report.mean(label, smoother) {
                println!("mean_rmse_{name}_{est}={}", num(m));
            }
        }
    }
    Ok(())
}

pub fn forecast(args: &ForecastArgs) -> Result<()> {
    let theta = read_theta(&args.theta)?;
    let maturities: Vec<f64> = match args.n_contracts {
        Some(n) => (1..=n).map(|i| i as f64 / 12.0).collect(),
        None if !args.maturities.is_empty() => args.maturities.clone(),
        None => {
            return Err(Error::Argument(
                "forecast needs --maturities or --n-contracts".into(),
            ))
        }
    };
    if let Some(m) = maturities.iter().find(|m| m.is_nan() || **m < 0.0) {
        return Err(Error::Argument(format!("maturity must be >= 0, got {m}")));
    }
    let curve = fitted_log_prices(&Vector2::new(args.chi, args.xi), &theta, &maturities)?;
    let mut body = String::from("maturity,log_price\n");
    for (m, y) in maturities.iter().zip(&curve) {
        let _ = writeln!(body, "{},{}", num(*m), num(*y));
    }
    let out = OutputDir::create(&args.common.output_dir)?;
    out.write("forecast.csv", &header(None, Some(&theta)), &body)?;
    Ok(())
}
