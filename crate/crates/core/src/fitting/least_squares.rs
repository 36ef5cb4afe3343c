use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Relative cost change below which the fit is converged.
    pub cost_tolerance: f64,
    /// Relative parameter step below which the fit is converged.
    pub step_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { cost_tolerance: 1e-10, step_tolerance: 1e-12, max_iterations: 200 }
    }
}

/// A nonlinear least-squares problem `min ½‖r(p)‖²`.
pub struct FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub residuals: F,
    pub initial: Vec<f64>,
    /// Optional box bounds; steps are projected onto the box.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Typical magnitude of each parameter, used for finite-difference steps.
    /// Defaults to `|initial|` (or 1 where the initial value is zero).
    pub scales: Option<Vec<f64>>,
    pub options: FitOptions,
}

impl<F> FitProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(residuals: F, initial: Vec<f64>) -> Self {
        Self { residuals, initial, bounds: None, scales: None, options: FitOptions::default() }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scales = Some(scales);
        self
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    CostTolerance,
    StepTolerance,
    ZeroResidual,
    MaxIterations,
    NonFiniteResidual,
    DampingOverflow,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Linearized covariance scaled by the residual variance; `None` when
    /// there are no degrees of freedom left.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub residual_norm: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl FitResult {
    /// One-sigma parameter uncertainties from the covariance diagonal.
    pub fn uncertainties(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect())
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

fn project(p: &mut [f64], bounds: Option<&Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in p.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    p: &[f64],
    scales: &[f64],
    m: usize,
) -> Option<DMatrix<f64>> {
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut work = p.to_vec();
    for j in 0..n {
        // cube root of machine epsilon balances truncation and rounding
        let h = 6e-6 * p[j].abs().max(scales[j]);
        work[j] = p[j] + h;
        let plus = f(&work);
        work[j] = p[j] - h;
        let minus = f(&work);
        work[j] = p[j];
        if plus.len() != m || minus.len() != m || !all_finite(&plus) || !all_finite(&minus) {
            return None;
        }
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Damped Gauss-Newton (Levenberg-Marquardt) with a central-difference Jacobian.
///
/// Each iteration first tries the undamped Gauss-Newton step; damping
/// `μ·diag(JᵀJ)` is switched on only when that step fails to lower the cost,
/// so linear problems are solved exactly in one step.
///
/// Returns `Err` only for an unusable setup (too few residuals, non-finite
/// residuals at the initial point). Running out of iterations or hitting a
/// non-finite residual mid-run yields `converged == false` with the last good
/// parameters.
pub fn least_squares<F>(problem: &FitProblem<F>) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let f = &problem.residuals;
    let opts = problem.options;
    let n = problem.initial.len();
    let mut p = problem.initial.clone();
    project(&mut p, problem.bounds.as_ref());
    let mut r = f(&p);
    let m = r.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no parameters to fit".into()));
    }
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "{m} residuals cannot determine {n} parameters"
        )));
    }
    if !all_finite(&r) {
        return Err(Error::Fit("residuals not finite at initial parameters".into()));
    }
    let scales: Vec<f64> = match &problem.scales {
        Some(s) => s.clone(),
        None => p.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect(),
    };

    let initial_cost = cost_of(&r);
    let mut cost = initial_cost;
    let mut mu = 0.0_f64;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut last_jac: Option<DMatrix<f64>> = None;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        if cost <= f64::MIN_POSITIVE || cost <= 1e-26 * initial_cost {
            termination = Termination::ZeroResidual;
            break;
        }
        let Some(jac) = jacobian(f, &p, &scales, m) else {
            termination = Termination::NonFiniteResidual;
            break;
        };
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * DVector::from_column_slice(&r);
        let max_diag = (0..n).map(|j| normal[(j, j)]).fold(0.0, f64::max);
        let diag: Vec<f64> = (0..n).map(|j| normal[(j, j)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE)).collect();
        last_jac = Some(jac);

        loop {
            let mut lhs = normal.clone();
            for j in 0..n {
                lhs[(j, j)] += mu * diag[j];
            }
            let step = lhs.clone().cholesky().map(|c| c.solve(&(-&gradient))).or_else(|| lhs.lu().solve(&(-&gradient)));
            let step = match step {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    mu = if mu == 0.0 { 1e-3 } else { mu * 4.0 };
                    if mu > 1e16 {
                        termination = Termination::DampingOverflow;
                        break 'outer;
                    }
                    continue;
                }
            };

            let mut trial = p.clone();
            for j in 0..n {
                trial[j] += step[j];
            }
            project(&mut trial, problem.bounds.as_ref());
            let r_trial = f(&trial);
            if r_trial.len() != m || !all_finite(&r_trial) {
                termination = Termination::NonFiniteResidual;
                break 'outer;
            }
            let cost_trial = cost_of(&r_trial);
            if cost_trial <= cost {
                let small_step = (0..n).all(|j| {
                    (trial[j] - p[j]).abs() <= opts.step_tolerance * (p[j].abs() + opts.step_tolerance * scales[j])
                });
                let rel_change = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = r_trial;
                cost = cost_trial;
                mu = if mu < 1e-9 { 0.0 } else { mu / 3.0 };
                if cost <= f64::MIN_POSITIVE || cost <= 1e-26 * initial_cost {
                    termination = Termination::ZeroResidual;
                    break 'outer;
                }
                if rel_change < opts.cost_tolerance {
                    termination = Termination::CostTolerance;
                    break 'outer;
                }
                if small_step {
                    termination = Termination::StepTolerance;
                    break 'outer;
                }
                break;
            }
            mu = if mu == 0.0 { 1e-3 } else { mu * 4.0 };
            if mu > 1e16 {
                // no descent direction left at this point: a stationary point
                termination = Termination::DampingOverflow;
                break 'outer;
            }
        }
    }

    let converged = matches!(
        termination,
        Termination::CostTolerance | Termination::StepTolerance | Termination::ZeroResidual
    ) || (termination == Termination::DampingOverflow && is_stationary(f, &p, &r, &scales, m));

    let jac = jacobian(f, &p, &scales, m).or(last_jac);
    let covariance = jac.and_then(|j| covariance(&j, cost, m, n));
    Ok(FitResult {
        residual_norm: (2.0 * cost).sqrt(),
        params: p,
        covariance,
        residuals: r,
        iterations,
        converged,
        termination,
    })
}

fn is_stationary<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], r: &[f64], scales: &[f64], m: usize) -> bool {
    let Some(jac) = jacobian(f, p, scales, m) else { return false };
    let g = jac.transpose() * DVector::from_column_slice(r);
    let scale = jac.norm() * DVector::from_column_slice(r).norm();
    g.norm() <= 1e-8 * scale.max(f64::MIN_POSITIVE)
}

fn covariance(jac: &DMatrix<f64>, cost: f64, m: usize, n: usize) -> Option<Vec<Vec<f64>>> {
    if m <= n {
        return None;
    }
    let variance = 2.0 * cost / (m - n) as f64;
    let normal = jac.transpose() * jac;
    let inv = normal.clone().try_inverse().filter(|i| i.iter().all(|v| v.is_finite())).or_else(|| {
        normal.svd(true, true).pseudo_inverse(1e-14).ok()
    })?;
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)] * variance).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_exact_data_one_step() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let problem = FitProblem::new(
            |p: &[f64]| xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y).collect(),
            vec![0.0, 0.0],
        );
        let fit = least_squares(&problem).unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - 2.5).abs() < 1e-12);
        assert!((fit.params[1] + 1.0).abs() < 1e-12);

        // the first Gauss-Newton step already lands on the answer, up to the
        // rounding of the finite-difference Jacobian
        let one = FitProblem { options: FitOptions { max_iterations: 1, ..FitOptions::default() }, ..problem };
        let fit = least_squares(&one).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!((fit.params[0] - 2.5).abs() < 1e-8);
        assert!((fit.params[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_stays_bounded() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64 * 0.1).collect();
        let problem = FitProblem::new(
            |p: &[f64]| xs.iter().map(|x| (p[0] + p[1]) * x - 3.0 * x).collect(),
            vec![1.0, 1.0],
        );
        let fit = least_squares(&problem).unwrap();
        assert!(fit.params.iter().all(|v| v.is_finite() && v.abs() < 10.0));
        assert!((fit.params[0] + fit.params[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn too_few_residuals() {
        let problem = FitProblem::new(|p: &[f64]| vec![p[0] + p[1]], vec![1.0, 2.0]);
        assert!(least_squares(&problem).is_err());
    }

    #[test]
    fn max_iterations_is_not_success() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let problem = FitProblem::new(
            |p: &[f64]| xs.iter().map(|x| p[0] * (-x / p[1]).exp() - 2.0 * (-x / 0.7).exp()).collect(),
            vec![0.1, 5.0],
        )
        .with_options(FitOptions { max_iterations: 1, ..FitOptions::default() });
        let fit = least_squares(&problem).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::MaxIterations);
    }

    #[test]
    fn nonfinite_midrun_keeps_last_good() {
        // residual blows up once the parameter crosses 0.5
        let problem = FitProblem::new(
            |p: &[f64]| {
                if p[0] > 0.5 {
                    vec![f64::NAN, f64::NAN]
                } else {
                    vec![p[0] - 1.0, 2.0 * (p[0] - 1.0)]
                }
            },
            vec![0.0],
        );
        let fit = least_squares(&problem).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::NonFiniteResidual);
        assert_eq!(fit.params, vec![0.0]);
    }

    #[test]
    fn bounds_are_respected() {
        let problem = FitProblem::new(|p: &[f64]| vec![p[0] - 5.0, p[0] - 5.0], vec![0.0])
            .with_bounds(vec![(-1.0, 2.0)]);
        let fit = least_squares(&problem).unwrap();
        assert!(fit.params[0] <= 2.0);
        assert!((fit.params[0] - 2.0).abs() < 1e-12);
    }
}
