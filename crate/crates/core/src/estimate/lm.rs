//! Damped least-squares (Levenberg-Marquardt) minimization of a sum of
//! squared residuals with Marquardt diagonal scaling.

use nalgebra::{Cholesky, DMatrix, DVector};

pub(crate) trait LeastSquares {
    /// `None` marks an infeasible parameter vector.
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>>;
    /// Residuals and `d residual / d p` (rows = residuals).
    fn residuals_and_jacobian(&self, p: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    pub relative_decrease: f64,
    pub decrease_window: usize,
    pub gradient: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    RelativeDecrease,
    MaxIterations,
    DampingLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const MAX_DAMPING: f64 = 1e16;

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Returns `None` when `p0` itself is infeasible.
pub(crate) fn minimize<P: LeastSquares>(problem: &P, p0: Vec<f64>, settings: &LmSettings) -> Option<LmResult> {
    let (mut r, mut jac) = problem.residuals_and_jacobian(&p0)?;
    let mut p = p0;
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut history = vec![cost];
    let n = p.len();
    if n == 0 {
        return Some(LmResult {
            params: p,
            cost,
            iterations: 0,
            termination: Termination::Gradient,
        });
    }

    for iteration in 0..settings.max_iterations {
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        if grad.amax() < settings.gradient {
            return Some(done(p, cost, iteration, Termination::Gradient));
        }
        let hess = jac.tr_mul(&jac);
        let max_diag = (0..n).map(|i| hess[(i, i)]).fold(0.0_f64, f64::max);
        let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);
        let diag: Vec<f64> = (0..n).map(|i| hess[(i, i)].max(floor)).collect();

        loop {
            let mut damped = hess.clone();
            for (i, d) in diag.iter().enumerate() {
                damped[(i, i)] += lambda * d;
            }
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Some(done(p, cost, iteration, Termination::DampingLimit));
                }
                continue;
            };
            let step = chol.solve(&(-&grad));
            if step.norm() < settings.step {
                return Some(done(p, cost, iteration, Termination::Step));
            }
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let accepted = problem
                .residuals(&trial)
                .map(|tr| (sum_sq(&tr), tr))
                .filter(|(c, _)| c.is_finite() && *c < cost);
            match accepted {
                Some((trial_cost, _)) => {
                    // Jacobian at the accepted point; residuals recomputed with it.
                    let Some((tr, tj)) = problem.residuals_and_jacobian(&trial) else {
                        lambda *= 4.0;
                        continue;
                    };
                    p = trial;
                    r = tr;
                    jac = tj;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    break;
                }
                None => {
                    lambda *= 4.0;
                    if lambda > MAX_DAMPING {
                        return Some(done(p, cost, iteration, Termination::DampingLimit));
                    }
                }
            }
        }

        history.push(cost);
        let k = history.len() - 1;
        if k >= settings.decrease_window {
            let before = history[k - settings.decrease_window];
            if before - cost < settings.relative_decrease * before {
                return Some(done(p, cost, iteration + 1, Termination::RelativeDecrease));
            }
        }
    }
    let iterations = settings.max_iterations;
    Some(done(p, cost, iterations, Termination::MaxIterations))
}

fn done(params: Vec<f64>, cost: f64, iterations: usize, termination: Termination) -> LmResult {
    LmResult {
        params,
        cost,
        iterations,
        termination,
    }
}
