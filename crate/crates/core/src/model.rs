//! Parameter set, pricing identity and the exact discretization of the
//! two-factor model.
//!
//! The log spot price is `chi + xi`. Both factors are Ornstein-Uhlenbeck:
//!
//! ```text
//! d chi = (-kappa chi - lambda_chi) dt + sigma_chi dZ_chi
//! d xi  = (mu_xi - gamma xi - lambda_xi) dt + sigma_xi dZ_xi,   dZ_chi dZ_xi = rho dt
//! ```
//!
//! The risk premia only enter the pricing adjustment `A(t)`; the state
//! transition is the physical-measure AR(1) obtained by integrating the SDEs
//! exactly over one step, so no SDE solver is involved anywhere.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ten model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean-reversion speed of the short-term factor (1/year).
    pub kappa: f64,
    /// Mean-reversion speed of the long-term factor (1/year).
    pub gamma: f64,
    /// Drift level of the long-term factor (1/year).
    pub mu_xi: f64,
    pub sigma_chi: f64,
    pub sigma_xi: f64,
    /// Instantaneous correlation of the two Brownian drivers.
    pub rho: f64,
    /// Risk premium of the short-term factor.
    pub lambda_chi: f64,
    /// Risk premium of the long-term factor.
    pub lambda_xi: f64,
    /// Measurement noise std of the front contract (log-price units).
    pub s1: f64,
    /// Measurement noise std shared by every other contract.
    pub s2: f64,
}

impl ModelParams {
    pub const N: usize = 10;

    /// Field names in vector order. Also the keys of the `key=value` file format.
    pub const NAMES: [&'static str; 10] = [
        "kappa",
        "gamma",
        "mu_xi",
        "sigma_chi",
        "sigma_xi",
        "rho",
        "lambda_chi",
        "lambda_xi",
        "s1",
        "s2",
    ];

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.kappa,
            self.gamma,
            self.mu_xi,
            self.sigma_chi,
            self.sigma_xi,
            self.rho,
            self.lambda_chi,
            self.lambda_xi,
            self.s1,
            self.s2,
        ]
    }

    pub fn from_array(v: [f64; 10]) -> Self {
        Self {
            kappa: v[0],
            gamma: v[1],
            mu_xi: v[2],
            sigma_chi: v[3],
            sigma_xi: v[4],
            rho: v[5],
            lambda_chi: v[6],
            lambda_xi: v[7],
            s1: v[8],
            s2: v[9],
        }
    }

    /// Checks positivity of rates, volatilities and noise levels, and `|rho| < 1`.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() {
                return Err(Error::Argument(format!("{name} must be finite, got {value}")));
            }
        }
        let positive = [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("sigma_chi", self.sigma_chi),
            ("sigma_xi", self.sigma_xi),
            ("s1", self.s1),
            ("s2", self.s2),
        ];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(Error::Argument(format!("{name} must be > 0, got {value}")));
            }
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Argument(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Relabels the factors so that `kappa >= gamma`.
    ///
    /// The swap exchanges `(kappa, sigma_chi)` with `(gamma, sigma_xi)` and
    /// rewrites the drift and premia so that `A(t)` is unchanged:
    /// the old `(mu_xi - lambda_xi)` becomes `-lambda_chi` of the new short
    /// factor and the new long factor gets zero drift. Only the physical
    /// drift of the state transition differs, so callers must re-optimize
    /// after a swap.
    pub fn canonicalize(&self) -> Self {
        if self.kappa >= self.gamma {
            return *self;
        }
        Self {
            kappa: self.gamma,
            gamma: self.kappa,
            mu_xi: 0.0,
            sigma_chi: self.sigma_xi,
            sigma_xi: self.sigma_chi,
            rho: self.rho,
            lambda_chi: self.lambda_xi - self.mu_xi,
            lambda_xi: self.lambda_chi,
            s1: self.s1,
            s2: self.s2,
        }
    }

    /// Stationary mean of the long-term factor under the physical measure.
    pub fn long_run_xi(&self) -> f64 {
        self.mu_xi / self.gamma
    }
}

/// One `name=value` line per parameter, in shortest round-trip form.
impl std::fmt::Display for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            writeln!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

/// Parses `name=value` lines. Blank lines and `#` comments are skipped;
/// every parameter must appear exactly once and the result must validate.
impl std::str::FromStr for ModelParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut values = [None; 10];
        for (i, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |column: &str, reason: String| Error::Parse {
                row: i + 1,
                column: column.into(),
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("", format!("expected name=value, got `{line}`")))?;
            let key = key.trim();
            let slot = Self::NAMES
                .iter()
                .position(|n| *n == key)
                .ok_or_else(|| err(key, "unknown parameter".into()))?;
            if values[slot].is_some() {
                return Err(err(key, "given twice".into()));
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(key, format!("not a number: `{}`", value.trim())))?;
            values[slot] = Some(v);
        }
        let mut out = [0.0; 10];
        for (i, v) in values.iter().enumerate() {
            out[i] = v.ok_or_else(|| Error::Parse {
                row: 0,
                column: Self::NAMES[i].into(),
                reason: "missing".into(),
            })?;
        }
        let theta = Self::from_array(out);
        theta.validate()?;
        Ok(theta)
    }
}

/// Point value of the two latent factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub chi: f64,
    pub xi: f64,
}

impl StateVec {
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.chi, self.xi)
    }

    /// Log spot price `chi + xi`.
    pub fn log_spot(&self) -> f64 {
        self.chi + self.xi
    }
}

impl From<Vector2<f64>> for StateVec {
    fn from(v: Vector2<f64>) -> Self {
        Self { chi: v[0], xi: v[1] }
    }
}

/// Gaussian belief over the state `(chi, xi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDistribution {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl StateDistribution {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        Self { mean, cov }
    }

    /// True when the symmetrized covariance has both eigenvalues above `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let sym = symmetrize2(&self.cov);
        let (a, b, d) = (sym[(0, 0)], sym[(0, 1)], sym[(1, 1)]);
        let half_trace = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        half_trace - disc >= -tol
    }
}

pub(crate) fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// `(1 - exp(-rate * t)) / rate`, evaluated without cancellation.
///
/// Equals the integral of `exp(-rate s)` over `[0, t]`; tends to `t` as
/// `rate -> 0`.
pub fn decay_integral(rate: f64, t: f64) -> f64 {
    let x = rate * t;
    if x.abs() < 1e-300 {
        return t;
    }
    -(-x).exp_m1() / rate
}

/// Deterministic maturity adjustment `A(t)` of the log futures price.
pub fn compute_a(theta: &ModelParams, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Argument(format!("maturity must be >= 0, got {t}")));
    }
    let ModelParams {
        kappa,
        gamma,
        mu_xi,
        sigma_chi,
        sigma_xi,
        rho,
        lambda_chi,
        lambda_xi,
        ..
    } = *theta;
    let premium = -lambda_chi * decay_integral(kappa, t) + (mu_xi - lambda_xi) * decay_integral(gamma, t);
    let variance = 0.5 * sigma_chi * sigma_chi * decay_integral(2.0 * kappa, t)
        + 0.5 * sigma_xi * sigma_xi * decay_integral(2.0 * gamma, t)
        + rho * sigma_chi * sigma_xi * decay_integral(kappa + gamma, t);
    let a = premium + variance;
    if !a.is_finite() {
        return Err(Error::Domain(format!("A({t}) is not finite")));
    }
    Ok(a)
}

/// Only the variance bracket of `A(t)`: half the risk-neutral variance of the log spot at `t`.
pub fn variance_adjustment(theta: &ModelParams, t: f64) -> f64 {
    0.5 * theta.sigma_chi * theta.sigma_chi * decay_integral(2.0 * theta.kappa, t)
        + 0.5 * theta.sigma_xi * theta.sigma_xi * decay_integral(2.0 * theta.gamma, t)
        + theta.rho * theta.sigma_chi * theta.sigma_xi * decay_integral(theta.kappa + theta.gamma, t)
}

/// Log futures price for maturity `t` given the current factors.
pub fn log_futures_price(theta: &ModelParams, chi0: f64, xi0: f64, t: f64) -> Result<f64> {
    let a = compute_a(theta, t)?;
    Ok((-theta.kappa * t).exp() * chi0 + (-theta.gamma * t).exp() * xi0 + a)
}

/// AR(1) transition `x_t = c + G x_{t-1} + w_t`, `w_t ~ N(0, W)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionModel {
    pub c: Vector2<f64>,
    /// Diagonal decay matrix.
    pub g: Matrix2<f64>,
    /// Covariance of the one-step shock.
    pub w: Matrix2<f64>,
    pub dt: f64,
}

pub fn build_transition(theta: &ModelParams, dt: f64) -> Result<TransitionModel> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::Argument(format!("dt must be finite and > 0, got {dt}")));
    }
    let ModelParams {
        kappa,
        gamma,
        mu_xi,
        sigma_chi,
        sigma_xi,
        rho,
        ..
    } = *theta;
    let c = Vector2::new(0.0, mu_xi * decay_integral(gamma, dt));
    let g = Matrix2::new((-kappa * dt).exp(), 0.0, 0.0, (-gamma * dt).exp());
    let w11 = sigma_chi * sigma_chi * decay_integral(2.0 * kappa, dt);
    let w22 = sigma_xi * sigma_xi * decay_integral(2.0 * gamma, dt);
    let w12 = rho * sigma_chi * sigma_xi * decay_integral(kappa + gamma, dt);
    let w = Matrix2::new(w11, w12, w12, w22);
    if !w.iter().chain(c.iter()).all(|v| v.is_finite()) {
        return Err(Error::Domain("transition matrices are not finite".into()));
    }
    Ok(TransitionModel { c, g, w, dt })
}

/// Measurement equation `y = d + F' x + v`, `v ~ N(0, V)` with diagonal `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    /// `A(T_i)` per contract.
    pub d: DVector<f64>,
    /// 2 x n loadings; row 0 is `exp(-kappa T_i)`, row 1 is `exp(-gamma T_i)`.
    pub f: DMatrix<f64>,
    /// Diagonal of `V`.
    pub v_diag: DVector<f64>,
}

impl MeasurementModel {
    pub fn n_obs(&self) -> usize {
        self.d.len()
    }

    /// Full `V` as a dense diagonal matrix.
    pub fn v(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.v_diag)
    }

    /// Keeps the listed rows, in the given order. Used both for dropping
    /// missing contracts and for relabeling them.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            d: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.d[i])),
            f: self.f.select_columns(rows),
            v_diag: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.v_diag[i])),
        }
    }
}

/// Measurement model for contracts listed as `(column index, maturity)`.
/// Column 0 is the front contract and carries `s1`.
pub fn measurement_for_contracts(
    theta: &ModelParams,
    contracts: &[(usize, f64)],
) -> Result<MeasurementModel> {
    let n = contracts.len();
    let mut d = DVector::zeros(n);
    let mut f = DMatrix::zeros(2, n);
    let mut v_diag = DVector::zeros(n);
    for (k, &(column, maturity)) in contracts.iter().enumerate() {
        if maturity.is_nan() || maturity < 0.0 {
            return Err(Error::Argument(format!(
                "maturity of contract {} must be >= 0, got {maturity}",
                column + 1
            )));
        }
        d[k] = compute_a(theta, maturity)?;
        f[(0, k)] = (-theta.kappa * maturity).exp();
        f[(1, k)] = (-theta.gamma * maturity).exp();
        let s = if column == 0 { theta.s1 } else { theta.s2 };
        v_diag[k] = s * s;
    }
    Ok(MeasurementModel { d, f, v_diag })
}

pub fn build_measurement(theta: &ModelParams, maturities: &[f64]) -> Result<MeasurementModel> {
    if maturities.is_empty() {
        return Err(Error::Argument("at least one maturity is required".into()));
    }
    let contracts: Vec<(usize, f64)> = maturities.iter().copied().enumerate().collect();
    measurement_for_contracts(theta, &contracts)
}

/// Stationary law of the transition: the default filter prior.
pub fn init_state(theta: &ModelParams) -> StateDistribution {
    let ModelParams {
        kappa,
        gamma,
        sigma_chi,
        sigma_xi,
        rho,
        ..
    } = *theta;
    let off = rho * sigma_chi * sigma_xi / (kappa + gamma);
    StateDistribution {
        mean: Vector2::new(0.0, theta.long_run_xi()),
        cov: Matrix2::new(
            sigma_chi * sigma_chi / (2.0 * kappa),
            off,
            off,
            sigma_xi * sigma_xi / (2.0 * gamma),
        ),
    }
}

/// Filter prior choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Stationary,
    /// Stationary mean with covariance inflated by `DIFFUSE_SCALE`.
    Diffuse,
}

pub const DIFFUSE_SCALE: f64 = 1e6;

impl InitMode {
    pub fn prior(self, theta: &ModelParams) -> StateDistribution {
        let base = init_state(theta);
        match self {
            InitMode::Stationary => base,
            InitMode::Diffuse => StateDistribution::new(base.mean, base.cov * DIFFUSE_SCALE),
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(InitMode::Stationary),
            "diffuse" => Ok(InitMode::Diffuse),
            other => Err(Error::Argument(format!("unknown init mode `{other}`"))),
        }
    }
}
