//! Synthetic state paths and futures panels.
//!
//! The generator is ChaCha8 (a counter-based stream cipher with a fixed,
//! platform-independent output) and normal draws use the Box-Muller
//! transform, so a seed maps to the same panel on every platform.

use chrono::NaiveDate;
use nalgebra::{DVector, Vector2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{business_days, FuturesPanel};
use crate::error::{Error, Result};
use crate::model::{build_measurement, build_transition, init_state, ModelParams, StateVec};

/// Trading days per contract month in rolling mode.
pub const DAYS_PER_MONTH: usize = 21;

/// Standard normal stream over a seeded ChaCha8 generator.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on (0, 1].
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * self.uniform();
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// How maturities evolve from one date to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaturityMode {
    /// Contract `i` always has maturity `i/12`.
    #[default]
    Constant,
    /// Maturities shrink by one day per step and roll over every
    /// `DAYS_PER_MONTH` steps.
    Rolling,
}

impl std::str::FromStr for MaturityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(MaturityMode::Constant),
            "rolling" => Ok(MaturityMode::Rolling),
            other => Err(Error::Argument(format!("unknown maturity mode `{other}`"))),
        }
    }
}

/// Per-date maturity rows for `n_contracts` monthly contracts.
pub fn maturity_schedule(mode: MaturityMode, n_dates: usize, n_contracts: usize) -> Vec<Vec<f64>> {
    (0..n_dates)
        .map(|t| {
            let elapsed = match mode {
                MaturityMode::Constant => 0.0,
                MaturityMode::Rolling => (t % DAYS_PER_MONTH) as f64 / DAYS_PER_MONTH as f64,
            };
            (1..=n_contracts)
                .map(|i| (i as f64 - elapsed) / 12.0)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub panel: FuturesPanel,
    /// State at each panel date (`x_1 .. x_{n_T}`).
    pub true_states: Vec<StateVec>,
    pub theta: ModelParams,
    pub seed: u64,
}

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2001, 1, 2).expect("valid date")
}

/// Draws `x_0` from the stationary law, steps the exact transition and emits
/// noisy log prices for each row of `maturities`.
pub fn simulate(
    theta: &ModelParams,
    n_dates: usize,
    dt: f64,
    maturities: &[Vec<f64>],
    seed: u64,
) -> Result<SimOutput> {
    theta.validate()?;
    if n_dates == 0 {
        return Err(Error::Argument("need at least one date".into()));
    }
    if maturities.len() != n_dates {
        return Err(Error::Argument(format!(
            "{} maturity rows for {n_dates} dates",
            maturities.len()
        )));
    }
    let transition = build_transition(theta, dt)?;
    let shock = transition
        .w
        .cholesky()
        .ok_or_else(|| Error::Domain("transition covariance is not positive definite".into()))?
        .l();
    let init = init_state(theta);
    let init_chol = init
        .cov
        .cholesky()
        .ok_or_else(|| Error::Domain("stationary covariance is not positive definite".into()))?
        .l();

    let mut normals = NormalStream::new(seed);
    let draw2 = |normals: &mut NormalStream| Vector2::new(normals.sample(), normals.sample());
    let mut x = init.mean + init_chol * draw2(&mut normals);

    let mut states = Vec::with_capacity(n_dates);
    let mut prices = Vec::with_capacity(n_dates);
    for row in maturities {
        x = transition.c + transition.g * x + shock * draw2(&mut normals);
        let m = build_measurement(theta, row)?;
        let mean = &m.d + m.f.transpose() * x;
        let noise = DVector::from_iterator(
            row.len(),
            m.v_diag.iter().map(|v| v.sqrt() * normals.sample()),
        );
        prices.push((mean + noise).iter().copied().collect::<Vec<_>>());
        states.push(StateVec::from(x));
    }
    let dates = business_days(default_start_date(), n_dates);
    let panel = FuturesPanel::from_dense(dates, &prices, maturities, dt)?;
    Ok(SimOutput {
        panel,
        true_states: states,
        theta: *theta,
        seed,
    })
}

/// Sidecar CSV of true states: `date,chi,xi`.
pub fn write_states<W: std::io::Write>(
    out: &mut W,
    sim: &SimOutput,
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "date,chi,xi")?;
    for (date, s) in sim.panel.dates().iter().zip(&sim.true_states) {
        writeln!(out, "{},{},{}", date.format("%Y-%m-%d"), s.chi, s.xi)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_never_zero() {
        let mut n = NormalStream::new(0);
        for _ in 0..10_000 {
            let u = n.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }

    #[test]
    fn normal_moments() {
        let mut n = NormalStream::new(11);
        let k = 200_000;
        let draws: Vec<f64> = (0..k).map(|_| n.sample()).collect();
        let mean = draws.iter().sum::<f64>() / k as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / k as f64;
        assert!(mean.abs() < 4.0 / (k as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / k as f64).sqrt());
    }

    #[test]
    fn rolling_schedule_stays_positive_and_ordered() {
        let rows = maturity_schedule(MaturityMode::Rolling, 50, 4);
        for row in &rows {
            assert!(row[0] > 0.0);
            assert!(row.windows(2).all(|w| w[1] > w[0]));
        }
        assert_eq!(rows[0], rows[DAYS_PER_MONTH]);
        assert!(rows[1][0] < rows[0][0]);
        let constant = maturity_schedule(MaturityMode::Constant, 3, 2);
        assert_eq!(constant[2], vec![1.0 / 12.0, 2.0 / 12.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let th = ModelParams {
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
        };
        assert!(simulate(&th, 0, 1.0 / 252.0, &[], 1).is_err());
        let rows = maturity_schedule(MaturityMode::Constant, 2, 2);
        assert!(simulate(&th, 3, 1.0 / 252.0, &rows, 1).is_err());
        let mut bad = th;
        bad.kappa = -1.0;
        assert!(simulate(&bad, 2, 1.0 / 252.0, &rows, 1).is_err());
    }
}
