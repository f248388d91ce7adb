//! Levenberg–Marquardt least squares with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once every parameter step is below this...
    pub step_tolerance: f64,
    /// ...and the relative change of the cost is below this.
    pub relative_tolerance: f64,
    /// Finite-difference step for each parameter.
    pub fd_steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn jacobian<F>(f: &F, x: &DVector<f64>, steps: &[f64], m: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let h = steps[k];
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    jac
}

/// Minimizes `|f(x)|²`. `project` maps a trial point back into the feasible
/// region (wrapping angles, clamping bounds).
pub fn levenberg_marquardt<F, P>(f: F, x0: DVector<f64>, options: &LmOptions, project: P) -> LmOutcome
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    P: Fn(&mut DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let mut r = f(&x);
    let m = r.len();
    let mut cost = r.norm_squared();
    if n == 0 {
        return LmOutcome {
            params: x,
            residuals: r,
            jacobian: DMatrix::zeros(m, 0),
            cost,
            iterations: 0,
            converged: true,
        };
    }
    let mut jac = jacobian(&f, &x, &options.fd_steps, m);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = &x + &step;
            project(&mut trial);
            let r_trial = f(&trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial <= cost {
                let rel = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.amax() < options.step_tolerance;
                x = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small_step && rel < options.relative_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent possible at any damping: already at a minimum
            converged = true;
            break;
        }
        jac = jacobian(&f, &x, &options.fd_steps, m);
        if converged {
            break;
        }
    }
    LmOutcome {
        params: x,
        residuals: r,
        jacobian: jac,
        cost,
        iterations,
        converged,
    }
}

/// `(JᵀJ)⁻¹` scaled by the reduced chi-square; the pseudo-inverse is used
/// when `JᵀJ` is singular.
pub fn covariance(jac: &DMatrix<f64>, cost: f64, dof: usize) -> DMatrix<f64> {
    let n = jac.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let jtj = jac.transpose() * jac;
    let inv = jtj
        .clone()
        .pseudo_inverse(1e-12 * jtj.amax().max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(n, n));
    let scale = if dof > 0 { cost / dof as f64 } else { 1.0 };
    let c = inv * scale;
    (&c + c.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let f = |p: &DVector<f64>| {
            DVector::from_iterator(
                t.len(),
                t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y),
            )
        };
        let opts = LmOptions {
            max_iterations: 200,
            step_tolerance: 1e-12,
            relative_tolerance: 1e-14,
            fd_steps: vec![1e-6; 3],
        };
        let out = levenberg_marquardt(f, DVector::from_vec(vec![1.0, 0.5, 0.0]), &opts, |_| {});
        assert!((out.params[0] - 2.5).abs() < 1e-7, "{:?}", out.params);
        assert!((out.params[1] - 1.3).abs() < 1e-7);
        assert!(out.cost < 1e-18);
    }

    #[test]
    fn covariance_is_symmetric() {
        let jac = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.3]);
        let c = covariance(&jac, 0.3, 1);
        assert!((&c - c.transpose()).amax() < 1e-15);
        assert!(c.symmetric_eigenvalues().iter().all(|v| *v >= -1e-12));
    }
}
