//! LASSO with the `||Y - X b||^2 + 2 lambda ||b||_1` parameterization, solved by
//! cyclic coordinate descent with an active-set inner loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Result, TrexError};
use crate::model::{dvec_serde, l1_norm, linf_norm, RegressionProblem};
use crate::norms::soft_threshold;

/// Coordinate changes below this (relative to `1 + ||b||_inf`) end a sweep loop.
const STEP_TOL: f64 = 1e-10;
/// Certified fits satisfy `kkt_residual <= KKT_TOL * lambda`.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    #[serde(with = "dvec_serde")]
    pub beta_hat: DVector<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn lasso_objective(problem: &RegressionProblem, beta: &DVector<f64>, lambda: f64) -> f64 {
    (problem.y() - problem.x() * beta).norm_squared() + 2.0 * lambda * l1_norm(beta)
}

/// Worst violation of the optimality conditions `|x_j^T r| <= lambda`, with
/// equality and matching sign on the nonzero coordinates.
pub fn kkt_residual(problem: &RegressionProblem, beta: &DVector<f64>, lambda: f64) -> Result<f64> {
    problem.check_beta(beta)?;
    let g = problem.x().tr_mul(&(problem.y() - problem.x() * beta));
    Ok(kkt_from_correlation(&g, beta, lambda))
}

fn kkt_from_correlation(g: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let mut worst = (linf_norm(g) - lambda).max(0.0);
    for (gj, bj) in g.iter().zip(beta.iter()) {
        if *bj != 0.0 {
            worst = worst.max((gj - lambda * bj.signum()).abs());
        }
    }
    worst
}

pub fn fit_lasso(problem: &RegressionProblem, lambda: f64, config: &SolverConfig) -> Result<LassoFit> {
    fit_lasso_from(problem, lambda, config, None)
}

/// Fits along a strictly descending grid, warm-starting each fit from the previous one.
pub fn lasso_path(
    problem: &RegressionProblem,
    lambdas: &[f64],
    config: &SolverConfig,
) -> Result<Vec<LassoFit>> {
    if lambdas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(TrexError::Parameter("lambda grid must be strictly descending".into()));
    }
    let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = fits.last().map(|f| &f.beta_hat);
        let fit = fit_lasso_from(problem, lambda, config, warm)?;
        fits.push(fit);
    }
    Ok(fits)
}

/// Geometric grid from `||X^T Y||_inf` down to `ratio * ||X^T Y||_inf`.
pub fn lambda_grid(problem: &RegressionProblem, count: usize, ratio: f64) -> Vec<f64> {
    let top = linf_norm(&problem.xty());
    if count <= 1 {
        return vec![top];
    }
    (0..count).map(|k| top * ratio.powf(k as f64 / (count - 1) as f64)).collect()
}

pub(crate) fn fit_lasso_from(
    problem: &RegressionProblem,
    lambda: f64,
    config: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TrexError::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    if !problem.is_normalized() && !config.allow_unnormalized {
        return Err(TrexError::Unnormalized);
    }
    let x = problem.x();
    let (n, p) = x.shape();
    let mut beta = match warm {
        Some(b) => {
            problem.check_beta(b)?;
            b.clone()
        }
        None => DVector::zeros(p),
    };
    let mut r = problem.y() - x * &beta;
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let data = x.as_slice();

    // One pass over `coords`; returns the largest coordinate change.
    let sweep = |coords: &mut dyn Iterator<Item = usize>, beta: &mut DVector<f64>, r: &mut DVector<f64>| {
        let mut max_change: f64 = 0.0;
        for j in coords {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = &data[j * n..(j + 1) * n];
            let old = beta[j];
            let rho = dot(col, r.as_slice()) + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                axpy(-delta, col, r.as_mut_slice());
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };

    let mut sweeps = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut prev_obj = r.norm_squared() + 2.0 * lambda * l1_norm(&beta);
    while sweeps < config.max_iterations {
        let change = sweep(&mut (0..p), &mut beta, &mut r);
        sweeps += 1;
        let obj = r.norm_squared() + 2.0 * lambda * l1_norm(&beta);
        debug_assert!(obj <= prev_obj * (1.0 + 1e-12) + 1e-12, "coordinate sweep increased the objective");
        prev_obj = obj;

        // Inner loop on the active set until it settles.
        if change > STEP_TOL * (1.0 + linf_norm(&beta)) {
            loop {
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                let c = sweep(&mut active.into_iter(), &mut beta, &mut r);
                sweeps += 1;
                if c <= STEP_TOL * (1.0 + linf_norm(&beta)) || sweeps >= config.max_iterations {
                    break;
                }
            }
            continue;
        }

        // Resynchronize the residual to avoid drift before certifying.
        r = problem.y() - x * &beta;
        let g = x.tr_mul(&r);
        kkt = kkt_from_correlation(&g, &beta, lambda);
        if kkt <= KKT_TOL * lambda {
            converged = true;
            break;
        }
    }
    if !converged {
        kkt = kkt_residual(problem, &beta, lambda)?;
    }
    let objective = lasso_objective(problem, &beta, lambda);
    Ok(LassoFit { beta_hat: beta, lambda, objective, kkt_residual: kkt, iterations: sweeps, converged })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> RegressionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        RegressionProblem::normalized(x, y).unwrap().0
    }

    fn orthogonal_problem() -> RegressionProblem {
        // Hadamard columns: X^T X = 4 I.
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0],
        );
        let y = DVector::from_vec(vec![3.0, -1.0, 0.5, 2.0]);
        RegressionProblem::new(x, y).unwrap()
    }

    #[test]
    fn zero_above_lambda_max() {
        let p = random_problem(10, 4, 1);
        let lmax = linf_norm(&p.xty());
        for lam in [lmax, 1.5 * lmax] {
            let fit = fit_lasso(&p, lam, &SolverConfig::default()).unwrap();
            assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
            assert!(fit.converged);
            assert_eq!(kkt_residual(&p, &fit.beta_hat, lam).unwrap(), 0.0);
        }
    }

    #[test]
    fn orthogonal_design_closed_form() {
        let p = orthogonal_problem();
        assert_eq!(p.x().tr_mul(p.x()), DMatrix::identity(3, 3) * 4.0);
        let xty = p.xty();
        for lam in [0.1, 1.0, 2.5, 4.0] {
            let fit = fit_lasso(&p, lam, &SolverConfig::default()).unwrap();
            for j in 0..3 {
                let expected = soft_threshold(xty[j] / 4.0, lam / 4.0);
                assert!((fit.beta_hat[j] - expected).abs() < 1e-8, "lambda {lam} coord {j}");
            }
        }
    }

    #[test]
    fn scalar_problem_closed_form() {
        let n = 5;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, -0.5, 0.3, 1.1]);
        let p = RegressionProblem::new(x, y.clone()).unwrap();
        for lam in [0.2, 1.0, 3.0, 10.0] {
            let fit = fit_lasso(&p, lam, &SolverConfig::default()).unwrap();
            let expected = soft_threshold(y.sum() / n as f64, lam / n as f64);
            assert!((fit.beta_hat[0] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn kkt_residual_examples() {
        let p = random_problem(8, 3, 2);
        let lmax = linf_norm(&p.xty());
        let zero = DVector::zeros(3);
        assert_eq!(kkt_residual(&p, &zero, lmax).unwrap(), 0.0);
        assert!((kkt_residual(&p, &zero, lmax / 2.0).unwrap() - lmax / 2.0).abs() < 1e-12);
        let fit = fit_lasso(&p, 0.3 * lmax, &SolverConfig::default()).unwrap();
        assert!(fit.kkt_residual <= KKT_TOL * 0.3 * lmax);
    }

    #[test]
    fn rejects_bad_lambda_and_unnormalized() {
        let p = random_problem(6, 2, 3);
        assert!(fit_lasso(&p, 0.0, &SolverConfig::default()).is_err());
        let raw = RegressionProblem::new(p.x() * 2.0, p.y().clone()).unwrap();
        assert!(matches!(fit_lasso(&raw, 1.0, &SolverConfig::default()), Err(TrexError::Unnormalized)));
        let cfg = SolverConfig { allow_unnormalized: true, ..SolverConfig::default() };
        assert!(fit_lasso(&raw, 1.0, &cfg).is_ok());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let p = random_problem(30, 20, 4);
        let cfg = SolverConfig { max_iterations: 1, ..SolverConfig::default() };
        let fit = fit_lasso(&p, 0.01, &cfg).unwrap();
        assert!(!fit.converged);
        assert!(fit.kkt_residual > 0.0);
    }

    #[test]
    fn path_matches_cold_starts() {
        let p = random_problem(15, 30, 5);
        let grid = lambda_grid(&p, 8, 0.05);
        let cfg = SolverConfig::default();
        let path = lasso_path(&p, &grid, &cfg).unwrap();
        assert!(path[0].beta_hat.iter().all(|&b| b == 0.0));
        for (fit, &lam) in path.iter().zip(&grid) {
            let cold = fit_lasso(&p, lam, &cfg).unwrap();
            assert!((fit.objective - cold.objective).abs() <= 1e-8 * (1.0 + cold.objective));
            assert!(fit.converged);
        }
        let single = lasso_path(&p, &grid[3..4], &cfg).unwrap();
        assert_eq!(single[0], fit_lasso(&p, grid[3], &cfg).unwrap());
        assert!(lasso_path(&p, &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn residual_norm_shrinks_along_path() {
        for seed in 0..20 {
            let p = random_problem(12, 6, 100 + seed);
            let grid = lambda_grid(&p, 10, 0.01);
            let path = lasso_path(&p, &grid, &SolverConfig::default()).unwrap();
            let rss: Vec<f64> =
                path.iter().map(|f| (p.y() - p.x() * &f.beta_hat).norm_squared()).collect();
            assert!(rss.windows(2).all(|w| w[1] <= w[0] + 1e-9), "seed {seed}: {rss:?}");
        }
    }

    #[test]
    fn scaling_equivariance() {
        let p = random_problem(10, 5, 6);
        let cfg = SolverConfig::default();
        let lam = 0.2 * linf_norm(&p.xty());
        let a = 3.7;
        let scaled = RegressionProblem::new(p.x().clone(), p.y() * a).unwrap();
        let b1 = fit_lasso(&p, lam, &cfg).unwrap().beta_hat;
        let b2 = fit_lasso(&scaled, a * lam, &cfg).unwrap().beta_hat;
        assert!((b2 - b1 * a).amax() < 1e-8);
    }
}
