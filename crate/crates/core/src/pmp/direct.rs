//! Projected-gradient baseline on the discrete cost.

use log::debug;
use serde::Serialize;

use super::{adjoint_gradient, discrete_costate};
use crate::problems::ProblemSpec;
use crate::simulate::{self, ControlGrid, TimeGrid};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DirectOptions {
    /// Stop when a full projected step moves no entry by more than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            tol: 1e-10,
            max_iter: 500,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Stationary,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct DirectOutcome {
    pub controls: ControlGrid,
    /// Cost of every accepted iterate, starting with `u_init`.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl DirectOutcome {
    pub fn cost(&self) -> f64 {
        *self.history.last().expect("history starts with the initial cost")
    }
}

/// Projected gradient descent with Armijo backtracking along the projection
/// arc. The gradient is the exact discrete adjoint, preconditioned by
/// `N/Δt` so that unit steps are meaningful at every resolution.
pub fn direct_optimize(
    p: &ProblemSpec,
    x0: &[f64],
    grid: &TimeGrid,
    u_init: &ControlGrid,
    opts: &DirectOptions,
) -> Result<DirectOutcome> {
    u_init.check_admissible(p)?;
    let d = p.dim;
    let precond = (x0.len() / d) as f64 / grid.dt();
    let mut u = u_init.clone();
    let mut traj = simulate::integrate_forward(p, &u, x0, grid)?;
    let mut cost = simulate::cost_discrete(p, &traj, &u);
    let mut history = vec![cost];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let costate = discrete_costate(p, &traj, &u)?;
        let grad = adjoint_gradient(p, &traj, &u, &costate);

        let trial_at = |alpha: f64| {
            let mut t = u.clone();
            for (c, g) in t.values_mut().iter_mut().zip(grad.values()) {
                *c -= alpha * precond * g;
            }
            for c in t.values_mut().chunks_exact_mut(d) {
                p.control_set.project(c);
            }
            t
        };

        let full = trial_at(1.0);
        if full.max_diff(&u) < opts.tol {
            stop = StopReason::Stationary;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = if alpha == 1.0 { full.clone() } else { trial_at(alpha) };
            let step: f64 = trial
                .values()
                .iter()
                .zip(u.values())
                .zip(grad.values())
                .map(|((t, c), g)| g * (t - c))
                .sum();
            let t_traj = simulate::integrate_forward(p, &trial, x0, grid)?;
            let t_cost = simulate::cost_discrete(p, &t_traj, &trial);
            if t_cost <= cost + opts.armijo * step {
                accepted = Some((trial, t_traj, t_cost));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, t_traj, t_cost)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        u = trial;
        traj = t_traj;
        cost = t_cost;
        history.push(cost);
        iterations += 1;
    }
    debug!("direct optimizer: {iterations} iterations, {stop:?}, cost {cost}");
    Ok(DirectOutcome {
        controls: u,
        history,
        iterations,
        stop,
    })
}
