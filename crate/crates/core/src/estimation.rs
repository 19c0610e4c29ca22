//! Maximum-likelihood fitting with a grid-search multi-start.
//!
//! The optimizer works on an unconstrained vector: logs of the positive
//! parameters, `atanh(rho)`, and the drift/premia as-is. A coarse grid over
//! the configured bounds (spaced uniformly in those coordinates) seeds a
//! simplex search from each of the best grid points; each simplex result is
//! then polished by a finite-difference BFGS pass.

use log::warn;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FuturesPanel;
use crate::error::{Error, Result};
use crate::kalman::log_likelihood_with;
use crate::model::{InitMode, ModelParams};
use crate::optim::{bfgs, central_gradient, central_hessian, nelder_mead};

/// Transform applied to each parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Log,
    Atanh,
    Identity,
}

const TRANSFORMS: [Transform; 10] = [
    Transform::Log,      // kappa
    Transform::Log,      // gamma
    Transform::Identity, // mu_xi
    Transform::Log,      // sigma_chi
    Transform::Log,      // sigma_xi
    Transform::Atanh,    // rho
    Transform::Identity, // lambda_chi
    Transform::Identity, // lambda_xi
    Transform::Log,      // s1
    Transform::Log,      // s2
];

/// Largest `|rho|` produced by `from_unconstrained`.
const RHO_LIMIT: f64 = 1.0 - 1e-12;

pub fn to_unconstrained(theta: &ModelParams) -> Result<[f64; 10]> {
    theta.validate()?;
    let mut out = theta.to_array();
    for (v, tr) in out.iter_mut().zip(TRANSFORMS) {
        *v = match tr {
            Transform::Log => v.ln(),
            Transform::Atanh => v.atanh(),
            Transform::Identity => *v,
        };
    }
    Ok(out)
}

pub fn from_unconstrained(v: &[f64]) -> Result<ModelParams> {
    if v.len() != ModelParams::N {
        return Err(Error::Argument(format!("expected 10 components, got {}", v.len())));
    }
    let mut out = [0.0; 10];
    for (i, ((o, x), tr)) in out.iter_mut().zip(v).zip(TRANSFORMS).enumerate() {
        if !x.is_finite() {
            return Err(Error::Argument(format!(
                "component {i} ({}) is not finite",
                ModelParams::NAMES[i]
            )));
        }
        *o = match tr {
            Transform::Log => x.exp().max(f64::MIN_POSITIVE),
            Transform::Atanh => x.tanh().clamp(-RHO_LIMIT, RHO_LIMIT),
            Transform::Identity => *x,
        };
    }
    Ok(ModelParams::from_array(out))
}

/// `d theta_i / d u_i` of the inverse transform.
fn jacobian_diag(theta: &ModelParams) -> [f64; 10] {
    let mut out = theta.to_array();
    for (v, tr) in out.iter_mut().zip(TRANSFORMS) {
        *v = match tr {
            Transform::Log => *v,
            Transform::Atanh => 1.0 - *v * *v,
            Transform::Identity => 1.0,
        };
    }
    out
}

/// Lower/upper bounds per parameter, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: [f64; 10],
    pub upper: [f64; 10],
}

impl Default for ParamBounds {
    fn default() -> Self {
        //        kappa  gamma  mu_xi  s_chi  s_xi   rho    l_chi  l_xi   s1     s2
        let lower = [1e-3, 1e-3, -1.0, 1e-3, 1e-3, -0.95, -1.0, -1.0, 1e-4, 1e-4];
        let upper = [10.0, 10.0, 1.0, 2.0, 2.0, 0.95, 1.0, 1.0, 0.5, 0.5];
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bounds: ParamBounds,
    /// Grid levels per parameter.
    pub grid_points: [usize; 10],
    /// Cap on grid evaluations; larger grids are subsampled uniformly.
    pub budget: usize,
    /// Number of grid points used as starts.
    pub top_k: usize,
    /// Objective evaluations allowed per local search stage.
    pub max_evals: usize,
    /// Absolute log-likelihood tolerance.
    pub tol: f64,
    pub seed: u64,
    pub init: InitMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::default(),
            grid_points: [3; 10],
            budget: 2000,
            top_k: 5,
            max_evals: 4000,
            tol: 1e-8,
            seed: 0,
            init: InitMode::Stationary,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &transform) in TRANSFORMS.iter().enumerate() {
            let (lo, hi) = (self.bounds.lower[i], self.bounds.upper[i]);
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Argument(format!(
                    "bounds for {}: lower {lo} must be < upper {hi}",
                    ModelParams::NAMES[i]
                )));
            }
            if transform == Transform::Log && lo <= 0.0 {
                return Err(Error::Argument(format!(
                    "lower bound of {} must be > 0",
                    ModelParams::NAMES[i]
                )));
            }
            if transform == Transform::Atanh && (lo <= -1.0 || hi >= 1.0) {
                return Err(Error::Argument("rho bounds must lie inside (-1, 1)".into()));
            }
            if self.grid_points[i] == 0 {
                return Err(Error::Argument(format!(
                    "grid points for {} must be >= 1",
                    ModelParams::NAMES[i]
                )));
            }
        }
        if self.budget == 0 || self.top_k == 0 {
            return Err(Error::Argument("budget and top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Value of level `k` of parameter `i`, spaced evenly in unconstrained space.
    fn level(&self, i: usize, k: usize) -> f64 {
        let transform = |v: f64| match TRANSFORMS[i] {
            Transform::Log => v.ln(),
            Transform::Atanh => v.atanh(),
            Transform::Identity => v,
        };
        let (lo, hi) = (transform(self.bounds.lower[i]), transform(self.bounds.upper[i]));
        let g = self.grid_points[i];
        let u = if g == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (g - 1) as f64
        };
        match TRANSFORMS[i] {
            Transform::Log => u.exp(),
            Transform::Atanh => u.tanh(),
            Transform::Identity => u,
        }
    }

    fn grid_point(&self, mut index: u128) -> ModelParams {
        let mut v = [0.0; 10];
        for (i, slot) in v.iter_mut().enumerate() {
            let g = self.grid_points[i] as u128;
            *slot = self.level(i, (index % g) as usize);
            index /= g;
        }
        ModelParams::from_array(v)
    }

    fn grid_size(&self) -> u128 {
        self.grid_points.iter().map(|&g| g as u128).product()
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: ModelParams,
    pub loglik: f64,
    /// Position in the full Cartesian grid.
    pub index: u128,
}

/// Grid indices to evaluate: all of them, or a seeded uniform subsample of
/// `budget` distinct indices, in ascending order.
fn grid_indices(config: &FitConfig) -> Vec<u128> {
    let total = config.grid_size();
    if total <= config.budget as u128 {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = std::collections::BTreeSet::new();
    // Rejection on a set is fine: budget is far below the grid size here.
    while picked.len() < config.budget {
        let draw = rand::Rng::random::<u128>(&mut rng) % total;
        picked.insert(draw);
    }
    picked.into_iter().collect()
}

/// Evaluates the log-likelihood on the whole (possibly subsampled) grid.
/// Failed points are dropped; the rest come back sorted by log-likelihood,
/// best first, ties broken by grid index.
pub fn grid_evaluate(panel: &FuturesPanel, config: &FitConfig) -> Result<Vec<GridPoint>> {
    config.validate()?;
    let indices = grid_indices(config);
    let evaluated: Vec<Option<GridPoint>> = par_map(indices, |index| {
        let theta = config.grid_point(index);
        log_likelihood_with(panel, &theta, config.init)
            .ok()
            .map(|loglik| GridPoint { theta, loglik, index })
    });
    let mut points: Vec<GridPoint> = evaluated.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::Estimation(
            "log-likelihood failed at every grid point".into(),
        ));
    }
    points.sort_by(|a, b| b.loglik.total_cmp(&a.loglik).then(a.index.cmp(&b.index)));
    Ok(points)
}

/// The `top_k` best grid points.
pub fn grid_search(panel: &FuturesPanel, config: &FitConfig) -> Result<Vec<GridPoint>> {
    let mut points = grid_evaluate(panel, config)?;
    points.truncate(config.top_k);
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: ModelParams,
    pub start_loglik: f64,
    pub final_theta: ModelParams,
    pub final_loglik: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Objective evaluations where the filter failed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ModelParams,
    pub loglik: f64,
    /// Natural-scale standard errors, absent when the Hessian is not invertible.
    pub std_errors: Option<[f64; 10]>,
    pub converged: bool,
    pub n_starts: usize,
    pub start_trace: Vec<StartRecord>,
    pub warnings: Vec<String>,
}

struct LocalFit {
    u: Vec<f64>,
    loglik: f64,
    converged: bool,
    evaluations: usize,
    failures: usize,
}

/// Negative log-likelihood over unconstrained coordinates, counting failures.
struct Objective<'a> {
    panel: &'a FuturesPanel,
    init: InitMode,
    failures: usize,
}

impl Objective<'_> {
    fn eval(&mut self, u: &[f64]) -> f64 {
        let value = from_unconstrained(u)
            .and_then(|theta| log_likelihood_with(self.panel, &theta, self.init));
        match value {
            Ok(ll) => -ll,
            Err(_) => {
                self.failures += 1;
                f64::INFINITY
            }
        }
    }
}

const SIMPLEX_STEP: f64 = 0.25;
const FD_STEP: f64 = 1e-5;

fn local_fit(panel: &FuturesPanel, config: &FitConfig, u0: &[f64]) -> LocalFit {
    let mut obj = Objective {
        panel,
        init: config.init,
        failures: 0,
    };
    let mut f = |u: &[f64]| obj.eval(u);
    let simplex = nelder_mead(&mut f, u0, SIMPLEX_STEP, config.tol, 1e-6, config.max_evals);
    // A second, smaller simplex around the first answer recovers from early collapse.
    let simplex2 = nelder_mead(&mut f, &simplex.x, 0.05, config.tol, 1e-7, config.max_evals);
    let polish = bfgs(&mut f, &simplex2.x, FD_STEP, config.tol, 1e-4, 200);
    let (best, converged) = if polish.value <= simplex2.value {
        (polish.x, polish.converged)
    } else {
        (simplex2.x, simplex2.converged)
    };
    let value = f(&best);
    LocalFit {
        u: best,
        loglik: -value,
        converged,
        evaluations: simplex.evaluations + simplex2.evaluations + polish.evaluations + 1,
        failures: obj.failures,
    }
}

/// Local search from one start, relabeling the factors when the result has
/// `kappa < gamma` and re-optimizing from the relabeled point.
fn fit_from_start(panel: &FuturesPanel, config: &FitConfig, start: &GridPoint) -> Result<StartRecord> {
    let u0 = to_unconstrained(&start.theta)?;
    let mut fit = local_fit(panel, config, &u0);
    let mut theta = from_unconstrained(&fit.u)?;
    if theta.kappa < theta.gamma {
        let swapped = theta.canonicalize();
        let refit = local_fit(panel, config, &to_unconstrained(&swapped)?);
        let refit_theta = from_unconstrained(&refit.u)?;
        let evaluations = fit.evaluations + refit.evaluations;
        let failures = fit.failures + refit.failures;
        if refit_theta.kappa >= refit_theta.gamma || refit.loglik > fit.loglik {
            fit = refit;
            theta = refit_theta;
        }
        fit.evaluations = evaluations;
        fit.failures = failures;
    }
    Ok(StartRecord {
        start: start.theta,
        start_loglik: start.loglik,
        final_theta: theta,
        final_loglik: fit.loglik,
        converged: fit.converged,
        evaluations: fit.evaluations,
        failures: fit.failures,
    })
}

/// Fits the model to a panel by maximum likelihood.
pub fn fit_mle(panel: &FuturesPanel, config: &FitConfig) -> Result<FitResult> {
    if panel.n_dates() < 2 || panel.n_contracts() < 2 {
        return Err(Error::Argument(format!(
            "fitting needs at least 2 dates and 2 contracts, got {} x {}",
            panel.n_dates(),
            panel.n_contracts()
        )));
    }
    let starts = grid_search(panel, config)?;
    let records: Vec<Result<StartRecord>> =
        par_map(starts.clone(), |start| fit_from_start(panel, config, &start));

    let mut trace = Vec::with_capacity(records.len());
    let mut diagnostics = Vec::new();
    for (k, record) in records.into_iter().enumerate() {
        match record {
            Ok(r) if r.final_loglik.is_finite() => trace.push(r),
            Ok(r) => diagnostics.push(format!("start {k}: non-finite final log-likelihood ({} failures)", r.failures)),
            Err(e) => diagnostics.push(format!("start {k}: {e}")),
        }
    }
    // Ties go to the earliest start.
    let best = trace
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.final_loglik.total_cmp(&b.final_loglik).then(j.cmp(i)))
        .map(|(_, r)| r.clone())
        .ok_or_else(|| Error::Estimation(format!("all starts failed: {}", diagnostics.join("; "))))?;

    let theta_hat = best.final_theta;
    let loglik = log_likelihood_with(panel, &theta_hat, config.init)?;
    let mut warnings = Vec::new();
    if theta_hat.kappa < theta_hat.gamma {
        warnings.push("no start produced kappa > gamma; reporting the best fit as found".into());
    }

    let std_errors = standard_errors(panel, config.init, &theta_hat)?;
    match &std_errors {
        Some(se) => {
            for (slot, name) in [(6, "lambda_chi"), (7, "lambda_xi")] {
                let estimate = theta_hat.to_array()[slot];
                if se[slot] > 10.0 * estimate.abs() {
                    warnings.push(format!(
                        "{name} is weakly identified: std error {:.3e} exceeds 10x the estimate {:.3e}",
                        se[slot], estimate
                    ));
                }
            }
        }
        None => warnings.push("Hessian not invertible; standard errors unavailable".into()),
    }
    for w in &warnings {
        warn!("{w}");
    }

    Ok(FitResult {
        theta_hat,
        loglik,
        std_errors,
        converged: best.converged,
        n_starts: starts.len(),
        start_trace: trace,
        warnings,
    })
}

/// Standard errors from the inverse central-difference Hessian of the
/// negative log-likelihood in unconstrained space, mapped to natural units
/// with the delta method.
pub fn standard_errors(
    panel: &FuturesPanel,
    init: InitMode,
    theta: &ModelParams,
) -> Result<Option<[f64; 10]>> {
    let u = to_unconstrained(theta)?;
    let mut obj = Objective {
        panel,
        init,
        failures: 0,
    };
    let hess = central_hessian(&mut |x: &[f64]| obj.eval(x), &u, 1e-4);
    let h = DMatrix::from_fn(10, 10, |i, j| hess[i][j]);
    if h.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let Some(chol) = h.cholesky() else {
        return Ok(None);
    };
    let cov = chol.inverse();
    let jac = jacobian_diag(theta);
    let mut se = [0.0; 10];
    for i in 0..10 {
        se[i] = jac[i].abs() * cov[(i, i)].sqrt();
    }
    Ok(Some(se))
}

/// Central-difference gradient of the log-likelihood in unconstrained space.
pub fn unconstrained_gradient(
    panel: &FuturesPanel,
    init: InitMode,
    theta: &ModelParams,
) -> Result<Vec<f64>> {
    let u = to_unconstrained(theta)?;
    let mut obj = Objective {
        panel,
        init,
        failures: 0,
    };
    let g = central_gradient(&mut |x: &[f64]| -obj.eval(x), &u, FD_STEP);
    Ok(g)
}

#[cfg(feature = "parallel")]
fn par_map<T: Send, U: Send>(items: Vec<T>, f: impl Fn(T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, U>(items: Vec<T>, f: impl Fn(T) -> U) -> Vec<U> {
    items.into_iter().map(f).collect()
}
