//! Bounded Levenberg–Marquardt for small nonlinear least-squares problems.
//!
//! Trial steps solve the damped normal equations and are projected onto the
//! box; a step is accepted only if it lowers the sum of squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iter: usize,
    /// Stop once the projected step is shorter than this.
    pub step_tol: f64,
    /// Stop once an accepted step lowers the objective by less than this.
    pub decrease_tol: f64,
    /// Relative forward-difference step.
    pub fd_rel: f64,
    /// Absolute floor of the forward-difference step.
    pub fd_abs: f64,
    /// Initial damping relative to the largest diagonal entry of `JᵀJ`.
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            max_iter: 400,
            step_tol: 1e-10,
            decrease_tol: 1e-14,
            fd_rel: 1e-6,
            fd_abs: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    StepTolerance,
    ObjectiveDecrease,
    MaxIterations,
    /// The objective is exactly zero.
    ZeroResidual,
    /// Damping grew without producing an acceptable step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub objective: f64,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub jacobian: DMatrix<f64>,
}

pub fn sum_of_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference step for component `j`, stepping backwards at the upper bound.
pub fn fd_step(x: f64, upper: f64, settings: &LmSettings) -> f64 {
    let h = settings.fd_abs.max(settings.fd_rel * x.abs());
    if x + h > upper {
        -h
    } else {
        h
    }
}

/// Forward-difference Jacobian of `f` at `x`, given `r = f(x)`.
pub fn forward_jacobian<F>(
    f: &mut F,
    x: &[f64],
    r: &[f64],
    upper: &[f64],
    settings: &LmSettings,
) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(r.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j], upper[j], settings);
        xp[j] = x[j] + h;
        let rp = f(&xp)?;
        if rp.len() != r.len() {
            return Err(Error::Precondition("residual length changed between evaluations".into()));
        }
        for (i, (a, b)) in rp.iter().zip(r).enumerate() {
            jac[(i, j)] = (a - b) / h;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Ratio of extreme singular values, infinite when rank deficient.
pub fn condition_number(jac: &DMatrix<f64>) -> f64 {
    if jac.ncols() == 0 || jac.nrows() == 0 {
        return f64::NAN;
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn solve_damped(a: &DMatrix<f64>, g: &DVector<f64>, scale: &[f64], mu: f64) -> Option<DVector<f64>> {
    let mut m = a.clone();
    for (j, s) in scale.iter().enumerate() {
        m[(j, j)] += mu * s;
    }
    let rhs = -g;
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    m.lu().solve(&rhs)
}

/// Minimizes `|f(x)|²` over the box `[lower, upper]`, starting from `x0`.
///
/// Failures of `f` at trial points count as rejected steps; a failure or a
/// non-finite objective at the start is an error.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    settings: &LmSettings,
) -> Result<LmOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Precondition("bound lengths differ from the unknown count".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);

    let mut r = f(&x)?;
    let mut evaluations = 1;
    let mut obj = sum_of_squares(&r);
    if !obj.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![obj];
    let mut jac = forward_jacobian(&mut f, &x, &r, upper, settings)?;
    evaluations += n;

    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * DVector::from_column_slice(&r);
    // running maximum of the column norms, as in MINPACK
    let mut scale: Vec<f64> = (0..n).map(|j| a[(j, j)]).collect();
    let floor = 1e-12 * scale.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for s in scale.iter_mut() {
        *s = s.max(floor);
    }
    let mut mu = settings.initial_damping;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    if obj == 0.0 {
        termination = Termination::ZeroResidual;
    } else {
        while iterations < settings.max_iter {
            iterations += 1;
            let Some(delta) = solve_damped(&a, &g, &scale, mu) else {
                mu *= nu;
                nu *= 2.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial, lower, upper);
            let step = DVector::from_iterator(n, trial.iter().zip(&x).map(|(a, b)| a - b));
            if step.norm() < settings.step_tol {
                termination = Termination::StepTolerance;
                break;
            }

            let outcome = f(&trial);
            evaluations += 1;
            let accepted = match outcome {
                Ok(rt) => {
                    let ot = sum_of_squares(&rt);
                    if ot.is_finite() && ot < obj {
                        let predicted = {
                            let lin = DVector::from_column_slice(&r) + &jac * &step;
                            obj - lin.norm_squared()
                        };
                        let rho = if predicted > 0.0 { (obj - ot) / predicted } else { 0.0 };
                        Some((rt, ot, rho))
                    } else {
                        None
                    }
                }
                Err(_) => None,
            };

            match accepted {
                Some((rt, ot, rho)) => {
                    let decrease = obj - ot;
                    x = trial;
                    r = rt;
                    obj = ot;
                    trace.push(obj);
                    mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                    nu = 2.0;
                    if obj == 0.0 {
                        termination = Termination::ZeroResidual;
                        break;
                    }
                    if decrease < settings.decrease_tol {
                        termination = Termination::ObjectiveDecrease;
                        break;
                    }
                    jac = forward_jacobian(&mut f, &x, &r, upper, settings)?;
                    evaluations += n;
                    a = jac.transpose() * &jac;
                    g = jac.transpose() * DVector::from_column_slice(&r);
                    for (j, s) in scale.iter_mut().enumerate() {
                        *s = s.max(a[(j, j)]);
                    }
                }
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    if mu > 1e32 {
                        termination = Termination::Stalled;
                        break;
                    }
                }
            }
        }
    }

    Ok(LmOutcome { x, residual: r, objective: obj, trace, iterations, evaluations, termination, jacobian: jac })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &LmSettings::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_active_bound() {
        // unconstrained minimum at x = 3, box stops at 2
        let f = |x: &[f64]| Ok(vec![x[0] - 3.0]);
        let out = minimize(f, &[0.0], &[0.0], &[2.0], &LmSettings::default()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-12);
        assert!((out.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fits_exponential_decay() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let f = |p: &[f64]| Ok(ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect());
        let out = minimize(f, &[1.0, 0.5], &[0.0, 0.0], &[10.0, 10.0], &LmSettings::default()).unwrap();
        assert!((out.x[0] - 2.5).abs() < 1e-7 && (out.x[1] - 1.3).abs() < 1e-7);
    }

    #[test]
    fn zero_residual_at_start() {
        let f = |x: &[f64]| Ok(vec![x[0] - 1.0]);
        let out = minimize(f, &[1.0], &[0.0], &[2.0], &LmSettings::default()).unwrap();
        assert_eq!(out.termination, Termination::ZeroResidual);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| Ok(vec![f64::NAN]);
        assert!(matches!(
            minimize(f, &[1.0], &[0.0], &[2.0], &LmSettings::default()),
            Err(Error::NonFiniteObjective)
        ));
    }

    #[test]
    fn backward_step_at_upper_bound() {
        let s = LmSettings::default();
        assert!(fd_step(2.0, 2.0, &s) < 0.0);
        assert_eq!(fd_step(0.0, 1.0, &s), 1e-6);
        assert_eq!(fd_step(1e3, 1e10, &s), 1e-3);
    }

    #[test]
    fn condition_of_diagonal() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 0.5]));
        assert!((condition_number(&j) - 8.0).abs() < 1e-12);
    }
}
