//! Levenberg–Marquardt for small dense robust least-squares problems.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("normal equations are singular even with maximal damping")]
    NumericalFailure,
    #[error("residual or Jacobian is not finite")]
    NonFinite,
    #[error("Jacobian has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
}

/// Huber loss applied to the norm of each residual block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberLoss {
    pub delta: f64,
}

impl HuberLoss {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0, "Huber delta must be positive");
        Self { delta }
    }

    /// Robust cost of a block with squared norm `sq`.
    pub fn rho(&self, sq: f64) -> f64 {
        let d2 = self.delta * self.delta;
        if sq <= d2 {
            sq
        } else {
            2.0 * self.delta * sq.sqrt() - d2
        }
    }

    /// IRLS weight of a block with squared norm `sq`.
    pub fn weight(&self, sq: f64) -> f64 {
        if sq <= self.delta * self.delta {
            1.0
        } else {
            self.delta / sq.sqrt()
        }
    }
}

/// A least-squares problem on a manifold with an analytic Jacobian.
pub trait LmProblem {
    type Params: Clone;

    /// Tangent-space dimension.
    fn dim(&self) -> usize;

    /// Residual entries per robust block. Residual length must be a multiple.
    fn block_size(&self) -> usize {
        1
    }

    fn residuals(&self, params: &Self::Params) -> DVector<f64>;

    /// Jacobian of the residuals with respect to a tangent step at `params`.
    fn jacobian(&self, params: &Self::Params) -> DMatrix<f64>;

    fn retract(&self, params: &Self::Params, step: &DVector<f64>) -> Self::Params;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub loss: Option<HuberLoss>,
    pub initial_lambda: f64,
    pub min_relative_decrease: f64,
    pub min_step_norm: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            loss: None,
            initial_lambda: 1e-4,
            min_relative_decrease: 1e-8,
            min_step_norm: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient vanished at the current parameters.
    Optimal,
    SmallCostDecrease,
    SmallStep,
    /// No damping produced a cost decrease.
    NoImprovement,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult<P> {
    pub params: P,
    pub initial_cost: f64,
    pub cost: f64,
    /// Linearizations performed.
    pub iterations: usize,
    pub termination: Termination,
}

impl<P> LmResult<P> {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

const MAX_LAMBDA: f64 = 1e12;

fn robust_cost(r: &DVector<f64>, block: usize, loss: Option<&HuberLoss>) -> f64 {
    r.as_slice()
        .chunks(block)
        .map(|b| {
            let sq: f64 = b.iter().map(|v| v * v).sum();
            loss.map_or(sq, |l| l.rho(sq))
        })
        .sum()
}

pub fn levenberg_marquardt<P: LmProblem>(
    problem: &P,
    initial: P::Params,
    config: &LmConfig,
) -> Result<LmResult<P::Params>, LmError> {
    let n = problem.dim();
    let block = problem.block_size().max(1);
    let loss = config.loss.as_ref();
    let mut params = initial;
    let mut r = problem.residuals(&params);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LmError::NonFinite);
    }
    let initial_cost = robust_cost(&r, block, loss);
    let mut cost = initial_cost;
    let mut lambda = config.initial_lambda;
    let mut iterations = 0;

    let termination = loop {
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }
        let j = problem.jacobian(&params);
        if j.nrows() != r.len() || j.ncols() != n {
            return Err(LmError::DimensionMismatch {
                rows: j.nrows(),
                cols: j.ncols(),
                expected_rows: r.len(),
                expected_cols: n,
            });
        }
        if j.iter().any(|v| !v.is_finite()) {
            return Err(LmError::NonFinite);
        }
        // IRLS weights per block.
        let mut jw = j.clone();
        let mut rw = r.clone();
        if let Some(l) = loss {
            for (b, chunk) in r.as_slice().chunks(block).enumerate() {
                let sq: f64 = chunk.iter().map(|v| v * v).sum();
                let w = l.weight(sq);
                if w != 1.0 {
                    for row in b * block..(b + 1) * block {
                        rw[row] *= w;
                        jw.row_mut(row).scale_mut(w);
                    }
                }
            }
        }
        let h = j.transpose() * &jw;
        let g = j.transpose() * &rw;
        if g.amax() <= 1e-14 * (1.0 + cost) {
            break Termination::Optimal;
        }
        iterations += 1;

        let mut accepted = None;
        let mut solved_any = false;
        while lambda <= MAX_LAMBDA {
            let mut damped = h.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-9);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            solved_any = true;
            let step = -chol.solve(&g);
            let candidate = problem.retract(&params, &step);
            let r_new = problem.residuals(&candidate);
            let new_cost = if r_new.iter().all(|v| v.is_finite()) {
                robust_cost(&r_new, block, loss)
            } else {
                f64::INFINITY
            };
            if new_cost < cost {
                lambda = (lambda / 10.0).max(1e-12);
                accepted = Some((candidate, r_new, new_cost, step.norm()));
                break;
            }
            lambda *= 10.0;
        }
        let Some((candidate, r_new, new_cost, step_norm)) = accepted else {
            if !solved_any {
                return Err(LmError::NumericalFailure);
            }
            break Termination::NoImprovement;
        };
        let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
        params = candidate;
        r = r_new;
        cost = new_cost;
        if step_norm < config.min_step_norm {
            break Termination::SmallStep;
        }
        if decrease < config.min_relative_decrease {
            break Termination::SmallCostDecrease;
        }
    };

    Ok(LmResult {
        params,
        initial_cost,
        cost,
        iterations,
        termination,
    })
}
