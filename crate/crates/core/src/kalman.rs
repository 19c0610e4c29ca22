//! Kalman filter, fixed-interval smoother and the prediction-error
//! log-likelihood.
//!
//! The state is two-dimensional, so state quantities use fixed-size nalgebra
//! types; observation quantities are dynamic because the number of quoted
//! contracts can change from date to date. A date with missing quotes is
//! updated with the observed sub-vector only, and its likelihood constant
//! uses the observed count.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};

use crate::data::FuturesPanel;
use crate::error::{Error, Result};
use crate::model::{
    build_transition, measurement_for_contracts, InitMode, symmetrize2, MeasurementModel,
    ModelParams, StateDistribution, TransitionModel,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter added to the innovation covariance after a failed factorization.
pub const JITTER: f64 = 1e-10;

/// Observation vector for one date together with its measurement model.
#[derive(Debug, Clone)]
pub struct ObservationStep {
    pub y: DVector<f64>,
    pub measurement: MeasurementModel,
    /// Panel column of each entry of `y`.
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `x_{t|t-1}`
    pub predicted: Vec<StateDistribution>,
    /// `x_{t|t}`
    pub filtered: Vec<StateDistribution>,
    /// Prediction errors `e_t` over the observed contracts of each date.
    pub innovations: Vec<DVector<f64>>,
    /// `L_{t|t-1}`, including any jitter that was needed.
    pub innovation_covs: Vec<DMatrix<f64>>,
    /// Panel columns behind each innovation entry.
    pub columns: Vec<Vec<usize>>,
    pub transition: TransitionModel,
    pub loglik: f64,
}

impl FilterOutput {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    /// `x_{t|n_T}`
    pub smoothed: Vec<StateDistribution>,
}

/// Per-date observation steps of a panel under `theta`.
pub fn observation_steps(panel: &FuturesPanel, theta: &ModelParams) -> Result<Vec<ObservationStep>> {
    (0..panel.n_dates())
        .map(|t| {
            let mut contracts = Vec::with_capacity(panel.n_contracts());
            let mut y = Vec::with_capacity(panel.n_contracts());
            for (j, maturity, price) in panel.observed(t) {
                contracts.push((j, maturity));
                y.push(price);
            }
            Ok(ObservationStep {
                y: DVector::from_vec(y),
                measurement: measurement_for_contracts(theta, &contracts)?,
                columns: contracts.iter().map(|c| c.0).collect(),
            })
        })
        .collect()
}

/// Filters a panel under `theta` starting from the prior `init` on `x_0`.
pub fn run_filter(
    panel: &FuturesPanel,
    theta: &ModelParams,
    init: &StateDistribution,
) -> Result<FilterOutput> {
    if panel.is_empty() {
        return Err(Error::Argument("cannot filter an empty panel".into()));
    }
    theta.validate()?;
    let transition = build_transition(theta, panel.dt())?;
    let steps = observation_steps(panel, theta)?;
    filter_steps(&transition, &steps, init)
}

/// Filter over explicit observation steps.
pub fn filter_steps(
    transition: &TransitionModel,
    steps: &[ObservationStep],
    init: &StateDistribution,
) -> Result<FilterOutput> {
    let mut out = FilterOutput {
        predicted: Vec::with_capacity(steps.len()),
        filtered: Vec::with_capacity(steps.len()),
        innovations: Vec::with_capacity(steps.len()),
        innovation_covs: Vec::with_capacity(steps.len()),
        columns: Vec::with_capacity(steps.len()),
        transition: *transition,
        loglik: 0.0,
    };
    out.loglik = filter_core(transition, steps, init, Some(&mut out))?;
    Ok(out)
}

/// Log-likelihood of the panel under `theta` with the stationary prior.
///
/// Errors from the recursion are returned as-is; the estimator maps them to
/// an infinitely bad objective and counts them.
pub fn log_likelihood(panel: &FuturesPanel, theta: &ModelParams) -> Result<f64> {
    log_likelihood_with(panel, theta, InitMode::Stationary)
}

/// [`log_likelihood`] with a choice of prior.
pub fn log_likelihood_with(panel: &FuturesPanel, theta: &ModelParams, init: InitMode) -> Result<f64> {
    if panel.is_empty() {
        return Err(Error::Argument("cannot filter an empty panel".into()));
    }
    theta.validate()?;
    let transition = build_transition(theta, panel.dt())?;
    let steps = observation_steps(panel, theta)?;
    filter_core(&transition, &steps, &init.prior(theta), None)
}

/// Shared recursion. `store` is `None` on the likelihood-only path; the
/// arithmetic is identical either way so both paths agree bit for bit.
fn filter_core(
    transition: &TransitionModel,
    steps: &[ObservationStep],
    init: &StateDistribution,
    mut store: Option<&mut FilterOutput>,
) -> Result<f64> {
    let TransitionModel { c, g, w, .. } = *transition;
    let mut mean = init.mean;
    let mut cov = symmetrize2(&init.cov);
    let mut loglik = 0.0;

    for (t, step) in steps.iter().enumerate() {
        let mean_pred = c + g * mean;
        let cov_pred = symmetrize2(&(g * cov * g.transpose() + w));
        let n = step.y.len();

        if n == 0 {
            mean = mean_pred;
            cov = cov_pred;
            if let Some(out) = store.as_deref_mut() {
                let dist = StateDistribution::new(mean, cov);
                out.predicted.push(dist);
                out.filtered.push(dist);
                out.innovations.push(DVector::zeros(0));
                out.innovation_covs.push(DMatrix::zeros(0, 0));
                out.columns.push(Vec::new());
            }
            continue;
        }

        let m = &step.measurement;
        // n x 2 loadings, the transpose of F.
        let z = m.f.transpose();
        let innovation = &step.y - &m.d - &z * mean_pred;
        let zp = &z * cov_pred;
        let mut l_cov = &zp * z.transpose();
        for i in 0..n {
            l_cov[(i, i)] += m.v_diag[i];
        }
        l_cov = (&l_cov + l_cov.transpose()) * 0.5;

        let (chol, l_cov) = factor_with_jitter(l_cov, t)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let alpha = chol.solve(&innovation);
        let quad = innovation.dot(&alpha);
        loglik += -0.5 * (n as f64 * LN_2PI + log_det + quad);

        // Gain K = P Z' L^{-1} = (L^{-1} Z P)'.
        let gain = chol.solve(&zp).transpose();
        let mean_filt = mean_pred + &gain * &innovation;
        // Joseph form: (I - K Z) P (I - K Z)' + K V K'.
        let kz: Matrix2<f64> = (&gain * &z).fixed_view::<2, 2>(0, 0).into_owned();
        let ikz = Matrix2::identity() - kz;
        let mut kvk = Matrix2::zeros();
        for i in 0..n {
            let k = Vector2::new(gain[(0, i)], gain[(1, i)]);
            kvk += k * k.transpose() * m.v_diag[i];
        }
        let cov_filt = symmetrize2(&(ikz * cov_pred * ikz.transpose() + kvk));

        if let Some(out) = store.as_deref_mut() {
            out.predicted.push(StateDistribution::new(mean_pred, cov_pred));
            out.filtered.push(StateDistribution::new(mean_filt, cov_filt));
            out.innovations.push(innovation);
            out.innovation_covs.push(l_cov);
            out.columns.push(step.columns.clone());
        }
        mean = mean_filt;
        cov = cov_filt;
    }
    if !loglik.is_finite() {
        return Err(Error::Numerical {
            step: steps.len().saturating_sub(1),
            reason: "log-likelihood is not finite".into(),
        });
    }
    Ok(loglik)
}

/// Cholesky of `l`, retrying once with `JITTER * mean(diag)` on the diagonal.
fn factor_with_jitter(
    mut l: DMatrix<f64>,
    step: usize,
) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            step,
            reason: "innovation covariance is not finite".into(),
        });
    }
    if let Some(chol) = l.clone().cholesky() {
        return Ok((chol, l));
    }
    let n = l.nrows();
    let bump = JITTER * l.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        l[(i, i)] += bump;
    }
    match l.clone().cholesky() {
        Some(chol) => Ok((chol, l)),
        None => Err(Error::Numerical {
            step,
            reason: "innovation covariance is not positive definite".into(),
        }),
    }
}

/// Backward fixed-interval (Rauch-Tung-Striebel) pass over a filter run.
pub fn run_smoother(filt: &FilterOutput) -> Result<SmootherOutput> {
    let n = filt.len();
    if n == 0 {
        return Ok(SmootherOutput { smoothed: Vec::new() });
    }
    let g = filt.transition.g;
    let mut smoothed = vec![filt.filtered[n - 1]; n];
    for t in (0..n - 1).rev() {
        let f = &filt.filtered[t];
        let p = &filt.predicted[t + 1];
        let chol = p.cov.cholesky().ok_or_else(|| Error::Numerical {
            step: t + 1,
            reason: "predicted covariance is singular".into(),
        })?;
        // J = P_{t|t} G' P_{t+1|t}^{-1}, solved as (P_{t+1|t}^{-1} G P_{t|t})'.
        let j = chol.solve(&(g * f.cov)).transpose();
        let next = &smoothed[t + 1];
        let mean = f.mean + j * (next.mean - p.mean);
        let cov = symmetrize2(&(f.cov + j * (next.cov - p.cov) * j.transpose()));
        smoothed[t] = StateDistribution::new(mean, cov);
    }
    Ok(SmootherOutput { smoothed })
}

/// Recomputes the log-likelihood from stored innovations and their covariances.
pub fn loglik_from_innovations(filt: &FilterOutput) -> Result<f64> {
    let mut total = 0.0;
    for (t, (e, l)) in filt.innovations.iter().zip(&filt.innovation_covs).enumerate() {
        if e.is_empty() {
            continue;
        }
        let chol = l.clone().cholesky().ok_or_else(|| Error::Numerical {
            step: t,
            reason: "stored innovation covariance is not positive definite".into(),
        })?;
        total += -0.5 * (e.len() as f64 * LN_2PI + chol.ln_determinant() + e.dot(&chol.solve(e)));
    }
    Ok(total)
}
