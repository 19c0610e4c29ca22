//! Derivative-free simplex search and a finite-difference quasi-Newton
//! polish, both minimizing over all of R^n.
//!
//! Objectives may return `f64::INFINITY` (or NaN, treated the same) to mark
//! points where they cannot be evaluated.

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao & Han).
///
/// Stops when the spread of simplex values drops below `ftol` and the
/// simplex diameter below `xtol`, or after `max_evals` evaluations.
pub fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    ftol: f64,
    xtol: f64,
    max_evals: usize,
) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if best.is_finite() && (worst - best).abs() <= ftol && diameter <= xtol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = towards(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = towards(alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = towards(alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = towards(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (xi, bi) in vertex.0.iter_mut().zip(&best_x) {
                *xi = bi + delta * (*xi - bi);
            }
            vertex.1 = eval(&vertex.0, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evaluations: evals,
        converged,
    }
}

/// Central-difference gradient with step `h` per coordinate.
pub fn central_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = sanitize(f(&probe));
            probe[i] = x[i] - h;
            let down = sanitize(f(&probe));
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with step `h` per coordinate.
#[allow(clippy::needless_range_loop)]
pub fn central_hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let f0 = sanitize(f(x));
    let mut probe = x.to_vec();
    let mut at = |probe: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            probe[i] += d;
        }
        let v = sanitize(f(probe));
        for &(i, d) in moves {
            probe[i] -= d;
        }
        v
    };
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        let up = at(&mut probe, &[(i, h)]);
        let down = at(&mut probe, &[(i, -h)]);
        hess[i][i] = (up - 2.0 * f0 + down) / (h * h);
        for j in 0..i {
            let pp = at(&mut probe, &[(i, h), (j, h)]);
            let pm = at(&mut probe, &[(i, h), (j, -h)]);
            let mp = at(&mut probe, &[(i, -h), (j, h)]);
            let mm = at(&mut probe, &[(i, -h), (j, -h)]);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// BFGS on finite-difference gradients with a backtracking Armijo line search.
///
/// Stops when an iteration improves the objective by less than `ftol`, the
/// gradient max-norm falls under `gtol`, or `max_iters` is reached.
pub fn bfgs(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    h: f64,
    ftol: f64,
    gtol: f64,
    max_iters: usize,
) -> Minimum {
    let n = x0.len();
    let mut evals = 1usize;
    let mut x = x0.to_vec();
    let mut fx = sanitize(f(&x));
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            evaluations: evals,
            converged: false,
        };
    }
    let mut grad = central_gradient(f, &x, h);
    evals += 2 * n;
    let mut inv_h = identity(n);
    let mut converged = false;

    for _ in 0..max_iters {
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < gtol {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = mat_vec(&inv_h, &grad).iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope.is_nan() || slope >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            inv_h = identity(n);
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let ft = sanitize(f(&trial));
            evals += 1;
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let g_new = central_gradient(f, &x_new, h);
        evals += 2 * n;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            let hy = mat_vec(&inv_h, &yv);
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    inv_h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        grad = g_new;
        if improvement < ftol {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        evaluations: evals,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn nelder_mead_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5 * x[2].powi(2);
        let m = nelder_mead(&mut f, &[0.0, 0.0, 0.0], 0.5, 1e-14, 1e-8, 10_000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5);
        assert!((m.x[1] + 2.0).abs() < 1e-5);
        assert!(m.x[2].abs() < 1e-5);
    }

    #[test]
    fn nelder_mead_avoids_infinite_region() {
        let mut f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 1.0).powi(2) };
        let m = nelder_mead(&mut f, &[2.0], 0.1, 1e-14, 1e-8, 1000);
        assert!((m.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let mut f = rosenbrock;
        let m = bfgs(&mut f, &[-1.2, 1.0], 1e-6, 0.0, 1e-6, 500);
        assert!((m.x[0] - 1.0).abs() < 1e-4, "{:?}", m.x);
        assert!((m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn hessian_of_quadratic() {
        let mut f = |x: &[f64]| 2.0 * x[0] * x[0] + x[0] * x[1] + 3.0 * x[1] * x[1];
        let h = central_hessian(&mut f, &[0.3, -0.2], 1e-3);
        assert!((h[0][0] - 4.0).abs() < 1e-6);
        assert!((h[0][1] - 1.0).abs() < 1e-6);
        assert!((h[1][1] - 6.0).abs() < 1e-6);
        let g = central_gradient(&mut f, &[0.3, -0.2], 1e-4);
        assert!((g[0] - (1.2 - 0.2)).abs() < 1e-8);
        assert!((g[1] - (0.3 - 1.2)).abs() < 1e-8);
    }
}
