//! Reference computations for the test suites.
//!
//! Everything here takes the slow, direct route: quadrature instead of
//! closed forms, one dense joint Gaussian instead of a recursion, small-step
//! Euler paths instead of the exact transition.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use oufutures::model::{MeasurementModel, ModelParams, TransitionModel};

/// Composite Simpson rule on `[0, t]` with `intervals` (even) sub-intervals.
pub fn simpson(f: impl Fn(f64) -> f64, t: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = t / intervals as f64;
    let mut sum = f(0.0) + f(t);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(k as f64 * h);
    }
    sum * h / 3.0
}

/// The six summands of `A(t)`, each as the integral of its exponential kernel.
pub fn a_terms_by_quadrature(th: &ModelParams, t: f64) -> [f64; 6] {
    let n = 20_000;
    let int = |rate: f64| simpson(|s| (-rate * s).exp(), t, n);
    [
        -th.lambda_chi * int(th.kappa),
        th.mu_xi * int(th.gamma),
        -th.lambda_xi * int(th.gamma),
        0.5 * th.sigma_chi * th.sigma_chi * int(2.0 * th.kappa),
        0.5 * th.sigma_xi * th.sigma_xi * int(2.0 * th.gamma),
        th.rho * th.sigma_chi * th.sigma_xi * int(th.kappa + th.gamma),
    ]
}

pub fn a_by_quadrature(th: &ModelParams, t: f64) -> f64 {
    a_terms_by_quadrature(th, t).iter().sum()
}

/// Joint Gaussian law of stacked states `x_1..x_T` and observations `y_1..y_T`.
pub struct JointGaussian {
    pub state_mean: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub obs_mean: DVector<f64>,
    pub obs_cov: DMatrix<f64>,
    /// `Cov(x, y)`
    pub cross_cov: DMatrix<f64>,
}

impl JointGaussian {
    /// Builds the law from the model matrices and the prior on `x_0`.
    #[allow(clippy::needless_range_loop)]
    pub fn new(
        transition: &TransitionModel,
        measurements: &[MeasurementModel],
        prior_mean: Vector2<f64>,
        prior_cov: Matrix2<f64>,
    ) -> Self {
        let t_len = measurements.len();
        let dims: Vec<usize> = measurements.iter().map(|m| m.d.len()).collect();
        let n_obs: usize = dims.iter().sum();
        let g = transition.g;

        // Marginal moments of each x_t.
        let mut means = Vec::with_capacity(t_len);
        let mut vars = Vec::with_capacity(t_len);
        let (mut m, mut p) = (prior_mean, prior_cov);
        for _ in 0..t_len {
            m = transition.c + g * m;
            p = g * p * g.transpose() + transition.w;
            means.push(m);
            vars.push(p);
        }
        let mut state_mean = DVector::zeros(2 * t_len);
        let mut state_cov = DMatrix::zeros(2 * t_len, 2 * t_len);
        for t in 0..t_len {
            state_mean.rows_mut(2 * t, 2).copy_from(&means[t]);
            for s in 0..=t {
                // Cov(x_t, x_s) = G^{t-s} Var(x_s) for t >= s.
                let mut block = vars[s];
                for _ in s..t {
                    block = g * block;
                }
                state_cov.view_mut((2 * t, 2 * s), (2, 2)).copy_from(&block);
                state_cov
                    .view_mut((2 * s, 2 * t), (2, 2))
                    .copy_from(&block.transpose());
            }
        }

        let mut h = DMatrix::zeros(n_obs, 2 * t_len);
        let mut d = DVector::zeros(n_obs);
        let mut v = DMatrix::zeros(n_obs, n_obs);
        let mut row = 0;
        for (t, meas) in measurements.iter().enumerate() {
            let k = dims[t];
            h.view_mut((row, 2 * t), (k, 2)).copy_from(&meas.f.transpose());
            d.rows_mut(row, k).copy_from(&meas.d);
            for i in 0..k {
                v[(row + i, row + i)] = meas.v_diag[i];
            }
            row += k;
        }
        let obs_mean = &d + &h * &state_mean;
        let obs_cov = &h * &state_cov * h.transpose() + v;
        let cross_cov = &state_cov * h.transpose();
        Self {
            state_mean,
            state_cov,
            obs_mean,
            obs_cov,
            cross_cov,
        }
    }

    /// `log N(y; obs_mean, obs_cov)` via a dense Cholesky factorization.
    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        let n = y.len() as f64;
        let chol = self.obs_cov.clone().cholesky().expect("obs covariance must be PD");
        let r = y - &self.obs_mean;
        let quad = r.dot(&chol.solve(&r));
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + chol.ln_determinant() + quad)
    }

    /// Mean and covariance of each `x_t` given all of `y`.
    pub fn conditional_states(&self, y: &DVector<f64>) -> Vec<(Vector2<f64>, Matrix2<f64>)> {
        let chol = self.obs_cov.clone().cholesky().expect("obs covariance must be PD");
        let r = y - &self.obs_mean;
        let mean = &self.state_mean + &self.cross_cov * chol.solve(&r);
        let cov = &self.state_cov - &self.cross_cov * chol.solve(&self.cross_cov.transpose());
        (0..self.state_mean.len() / 2)
            .map(|t| {
                let m = Vector2::new(mean[2 * t], mean[2 * t + 1]);
                let c: Matrix2<f64> = cov.fixed_view::<2, 2>(2 * t, 2 * t).into_owned();
                (m, c)
            })
            .collect()
    }

    /// Mean and covariance of each `x_t` given `y_1..y_t` only.
    pub fn filtered_states(
        transition: &TransitionModel,
        measurements: &[MeasurementModel],
        prior_mean: Vector2<f64>,
        prior_cov: Matrix2<f64>,
        ys: &[DVector<f64>],
    ) -> Vec<(Vector2<f64>, Matrix2<f64>)> {
        (1..=measurements.len())
            .map(|t| {
                let joint = Self::new(transition, &measurements[..t], prior_mean, prior_cov);
                *joint.conditional_states(&stack(&ys[..t])).last().unwrap()
            })
            .collect()
    }
}

pub fn stack(ys: &[DVector<f64>]) -> DVector<f64> {
    let values: Vec<f64> = ys.iter().flat_map(|y| y.iter().copied()).collect();
    DVector::from_vec(values)
}

/// Small deterministic generator for oracle randomness (SplitMix64), kept
/// separate from the library's generator.
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = self.uniform(-1.0, 1.0);
            let v = self.uniform(-1.0, 1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// A valid parameter draw over moderate ranges.
    pub fn params(&mut self) -> ModelParams {
        ModelParams {
            kappa: self.uniform(0.2, 4.0),
            gamma: self.uniform(0.01, 0.8),
            mu_xi: self.uniform(-0.3, 0.3),
            sigma_chi: self.uniform(0.05, 0.8),
            sigma_xi: self.uniform(0.05, 0.5),
            rho: self.uniform(-0.9, 0.9),
            lambda_chi: self.uniform(-0.3, 0.3),
            lambda_xi: self.uniform(-0.3, 0.3),
            s1: self.uniform(0.005, 0.1),
            s2: self.uniform(0.005, 0.1),
        }
    }
}

/// Euler-Maruyama sample covariance of `(chi_dt, xi_dt)` started at zero,
/// using the drift-free part of the SDEs (the drift does not affect the
/// covariance). Returns `(cov, standard errors of each entry)`.
pub fn euler_step_covariance(
    th: &ModelParams,
    dt: f64,
    paths: usize,
    inner_steps: usize,
    seed: u64,
) -> (Matrix2<f64>, Matrix2<f64>) {
    let mut rng = SplitMix::new(seed);
    let h = dt / inner_steps as f64;
    let sq = h.sqrt();
    let rho_c = (1.0 - th.rho * th.rho).sqrt();
    let mut samples = Vec::with_capacity(paths);
    for _ in 0..paths {
        let (mut chi, mut xi) = (0.0f64, 0.0f64);
        for _ in 0..inner_steps {
            let z1 = rng.normal();
            let z2 = th.rho * z1 + rho_c * rng.normal();
            chi += -th.kappa * chi * h + th.sigma_chi * sq * z1;
            xi += -th.gamma * xi * h + th.sigma_xi * sq * z2;
        }
        samples.push((chi, xi));
    }
    let n = paths as f64;
    let m0 = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let m1 = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut cov: Matrix2<f64> = Matrix2::zeros();
    let mut fourth: Matrix2<f64> = Matrix2::zeros();
    for &(a, b) in &samples {
        let (a, b) = (a - m0, b - m1);
        let prods = [a * a, a * b, b * b];
        cov[(0, 0)] += prods[0];
        cov[(0, 1)] += prods[1];
        cov[(1, 1)] += prods[2];
        fourth[(0, 0)] += prods[0] * prods[0];
        fourth[(0, 1)] += prods[1] * prods[1];
        fourth[(1, 1)] += prods[2] * prods[2];
    }
    cov /= n - 1.0;
    cov[(1, 0)] = cov[(0, 1)];
    let mut se: Matrix2<f64> = Matrix2::zeros();
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let var: f64 = fourth[(i, j)] / n - cov[(i, j)] * cov[(i, j)];
        se[(i, j)] = (var / n).sqrt();
    }
    se[(1, 0)] = se[(0, 1)];
    (cov, se)
}
