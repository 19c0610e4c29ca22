//! Browser demo: term-structure curves, simulated factor paths, and
//! filtered versus smoothed states, computed by the core library in wasm.
//!
//! Parameters arrive as a ten-element array in `ModelParams::NAMES` order.
//! Results go back as flat `Float64Array`s laid out series after series.

use oufutures::simulation::{maturity_schedule, simulate, MaturityMode};
use oufutures::{init_state, log_futures_price, run_filter, run_smoother, ModelParams, Result};
use wasm_bindgen::prelude::*;

fn params(values: &[f64]) -> Result<ModelParams> {
    let array: [f64; 10] = values.try_into().map_err(|_| {
        oufutures::Error::Argument(format!("expected 10 parameters, got {}", values.len()))
    })?;
    let theta = ModelParams::from_array(array);
    theta.validate()?;
    Ok(theta)
}

/// Log futures prices at `points` maturities evenly spaced on `[0, max_maturity]`,
/// as `[maturities..., log_prices...]`.
pub fn curve(theta: &[f64], chi: f64, xi: f64, max_maturity: f64, points: usize) -> Result<Vec<f64>> {
    let theta = params(theta)?;
    let points = points.max(2);
    let mats: Vec<f64> = (0..points)
        .map(|i| max_maturity * i as f64 / (points - 1) as f64)
        .collect();
    let prices = mats
        .iter()
        .map(|&t| log_futures_price(&theta, chi, xi, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok([mats, prices].concat())
}

/// Simulated daily factor paths as `[chi..., xi...]`.
pub fn paths(theta: &[f64], n_dates: usize, seed: u64) -> Result<Vec<f64>> {
    let theta = params(theta)?;
    let mats = maturity_schedule(MaturityMode::Constant, n_dates, 1);
    let sim = simulate(&theta, n_dates, oufutures::TRADING_DAY, &mats, seed)?;
    let chi = sim.true_states.iter().map(|s| s.chi);
    let xi = sim.true_states.iter().map(|s| s.xi);
    Ok(chi.chain(xi).collect())
}

/// Simulates a panel, then filters and smooths it. Returns the short-term
/// factor as `[true..., filtered..., smoothed...]` followed by the filtered
/// and smoothed standard deviations.
pub fn filter_smoother(theta: &[f64], n_dates: usize, n_contracts: usize, seed: u64) -> Result<Vec<f64>> {
    let theta = params(theta)?;
    let mats = maturity_schedule(MaturityMode::Rolling, n_dates, n_contracts);
    let sim = simulate(&theta, n_dates, oufutures::TRADING_DAY, &mats, seed)?;
    let filt = run_filter(&sim.panel, &theta, &init_state(&theta))?;
    let smth = run_smoother(&filt)?;
    let mut out = Vec::with_capacity(5 * n_dates);
    out.extend(sim.true_states.iter().map(|s| s.chi));
    out.extend(filt.filtered.iter().map(|d| d.mean[0]));
    out.extend(smth.smoothed.iter().map(|d| d.mean[0]));
    out.extend(filt.filtered.iter().map(|d| d.cov[(0, 0)].sqrt()));
    out.extend(smth.smoothed.iter().map(|d| d.cov[(0, 0)].sqrt()));
    Ok(out)
}

fn js(r: Result<Vec<f64>>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn parameter_names() -> Vec<String> {
    ModelParams::NAMES.iter().map(|s| s.to_string()).collect()
}

#[wasm_bindgen]
pub fn term_structure(theta: &[f64], chi: f64, xi: f64, max_maturity: f64, points: usize) -> Result<Vec<f64>, JsError> {
    js(curve(theta, chi, xi, max_maturity, points))
}

#[wasm_bindgen]
pub fn simulate_paths(theta: &[f64], n_dates: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(paths(theta, n_dates, seed))
}

#[wasm_bindgen]
pub fn filter_vs_smoother(theta: &[f64], n_dates: usize, n_contracts: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    js(filter_smoother(theta, n_dates, n_contracts, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THETA: [f64; 10] = [1.5, 0.1, 0.05, 0.3, 0.2, 0.4, 0.02, 0.01, 0.02, 0.01];

    #[test]
    fn curve_starts_at_spot() {
        let out = curve(&THETA, 0.1, 3.0, 5.0, 11).unwrap();
        assert_eq!(out.len(), 22);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[10], 5.0);
        assert!((out[11] - 3.1).abs() < 1e-15);
    }

    #[test]
    fn paths_layout() {
        let out = paths(&THETA, 40, 9).unwrap();
        assert_eq!(out.len(), 80);
        assert_eq!(out, paths(&THETA, 40, 9).unwrap());
    }

    #[test]
    fn smoother_ends_on_filter() {
        let n = 60;
        let out = filter_smoother(&THETA, n, 5, 2).unwrap();
        assert_eq!(out.len(), 5 * n);
        assert_eq!(out[2 * n - 1], out[3 * n - 1]);
        let (filt_sd, smth_sd) = (&out[3 * n..4 * n], &out[4 * n..]);
        assert!(filt_sd.iter().zip(smth_sd).all(|(f, s)| s <= &(f + 1e-12)));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(curve(&THETA[..9], 0.0, 0.0, 1.0, 5).is_err());
        let mut bad = THETA;
        bad[5] = 1.0;
        assert!(paths(&bad, 10, 0).is_err());
    }
}
