//! The finite-N Pontryagin system.
//!
//! Costates are stored rescaled, so the Hamiltonian carries `1/N` weights:
//!
//! `H_N(x, r, u) = (1/N) Σ_k ⟨r_k, v(x_k, ψ) + h(x_k, ψ) u_k⟩ − L(ψ) − (1/N) Σ_k φ(u_k)`
//!
//! and the costate solves `ṙ_i = −N ∂H_N/∂x_i`, which expands to
//!
//! `ṙ_i = −∇ₓvᵀ(x_i) r_i − (1/N) Σ_k ∇_ψvᵀ(x_k)(x_i) r_k + ∇_ψL(x_i)
//!        − ∇ₓh(x_i)⟨r_i, u_i⟩ − (1/N) Σ_k ∇_ψh(x_k)(x_i)⟨r_k, u_k⟩`
//!
//! with `r_i(T) = −∇_ψ g(Ψ_T)(x_i(T))` (zero without terminal cost).

mod adjoint;
mod direct;

use log::debug;
use serde::Serialize;

use crate::problems::ProblemSpec;
use crate::simulate::{self, ControlGrid, TimeGrid, TrajectoryBundle};
use crate::{vec, Error, Result};

pub use adjoint::{adjoint_gradient, discrete_costate};
pub use direct::{direct_optimize, DirectOptions, DirectOutcome, StopReason};

/// Rescaled costates `r_i(t_k)` on every node, stored `[k][i][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostateBundle {
    grid: TimeGrid,
    particles: usize,
    dim: usize,
    values: Vec<f64>,
}

impl CostateBundle {
    pub(crate) fn from_parts(grid: TimeGrid, particles: usize, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.nodes() * particles * dim);
        CostateBundle {
            grid,
            particles,
            dim,
            values,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let w = self.particles * self.dim;
        &self.values[k * w..(k + 1) * w]
    }

    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.dim;
        &self.node(k)[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `H_N(x, r, u)` for one time node.
pub fn hamiltonian_n(p: &ProblemSpec, x: &[f64], r: &[f64], u: &[f64]) -> f64 {
    let d = p.dim;
    let n = x.len() / d;
    let mut vel = vec![0.0; x.len()];
    p.velocity(x, u, &mut vel);
    let transport = vec::dot(r, &vel) / n as f64;
    let control: f64 = u.chunks_exact(d).map(|c| p.eval_phi(c)).sum::<f64>() / n as f64;
    let running = if p.has_running_cost() {
        p.running_cost(x)
    } else {
        0.0
    };
    transport - running - control
}

/// The unique maximiser of `H_N(x, r, ·)` over `K^N`: per particle,
/// `Π_K(h(x_k, ψ) r_k / λ)`.
pub fn maximize_hamiltonian_pointwise(p: &ProblemSpec, x: &[f64], r: &[f64]) -> Vec<f64> {
    p.maximizing_controls(x, r)
}

/// `ṙ = −J_xᵀ r + ∇_ψ L` at one configuration.
fn costate_velocity(p: &ProblemSpec, x: &[f64], u: &[f64], r: &[f64], out: &mut [f64]) {
    p.velocity_vjp(x, u, r, out);
    out.iter_mut().for_each(|c| *c = -*c);
    if p.has_running_cost() {
        let mut gl = vec![0.0; x.len()];
        p.running_cost_gradient(x, &mut gl);
        vec::axpy(1.0, &gl, out);
    }
}

/// RK4 backward from the terminal condition. On `[t_k, t_{k+1}]` the state at
/// the midpoint is the cubic Hermite interpolant of the two node states and
/// their velocities under the step's control.
pub fn integrate_costate_backward(
    p: &ProblemSpec,
    traj: &TrajectoryBundle,
    u: &ControlGrid,
) -> Result<CostateBundle> {
    let grid = *traj.grid();
    let n = traj.particles();
    let d = p.dim;
    let w = n * d;
    let dt = grid.dt();
    let mut values = vec![0.0; w * grid.nodes()];
    let s = grid.steps();
    values[s * w..].copy_from_slice(&p.terminal_costate(traj.terminal()));

    let mut k1 = vec![0.0; w];
    let mut k2 = vec![0.0; w];
    let mut k3 = vec![0.0; w];
    let mut k4 = vec![0.0; w];
    let mut stage = vec![0.0; w];
    let mut mid = vec![0.0; w];
    let mut f0 = vec![0.0; w];
    let mut f1 = vec![0.0; w];

    for k in (0..s).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * w);
        let rk = &mut head[k * w..];
        let r1 = &tail[..w];
        let uk = u.node(k);
        let (x0, x1) = (traj.node(k), traj.node(k + 1));
        p.velocity(x0, uk, &mut f0);
        p.velocity(x1, uk, &mut f1);
        for j in 0..w {
            mid[j] = 0.5 * (x0[j] + x1[j]) + dt / 8.0 * (f0[j] - f1[j]);
        }
        costate_velocity(p, x1, uk, r1, &mut k1);
        for j in 0..w {
            stage[j] = r1[j] - 0.5 * dt * k1[j];
        }
        costate_velocity(p, &mid, uk, &stage, &mut k2);
        for j in 0..w {
            stage[j] = r1[j] - 0.5 * dt * k2[j];
        }
        costate_velocity(p, &mid, uk, &stage, &mut k3);
        for j in 0..w {
            stage[j] = r1[j] - dt * k3[j];
        }
        costate_velocity(p, x0, uk, &stage, &mut k4);
        for j in 0..w {
            rk[j] = r1[j] - dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if rk.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "costate",
                step: k,
            });
        }
    }
    Ok(CostateBundle::from_parts(grid, n, d, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepOptions {
    /// Relaxation `θ ∈ (0, 1]` in `u ← (1 − θ) u + θ û`.
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            theta: 0.5,
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub iterations: usize,
    /// `max_k [H_N(x, r, û) − H_N(x, r, u)]` before each update.
    pub residuals: Vec<f64>,
    /// `max |u_new − u|` of each update.
    pub update_norms: Vec<f64>,
    /// Discrete cost of the control entering each iteration.
    pub costs: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub controls: ControlGrid,
    pub trajectory: TrajectoryBundle,
    pub costate: CostateBundle,
    pub report: SweepReport,
}

impl SweepOutcome {
    pub fn cost(&self, p: &ProblemSpec) -> f64 {
        simulate::cost_discrete(p, &self.trajectory, &self.controls)
    }
}

/// Maximality gap `max_k [H_N(x_k, r_k, û_k) − H_N(x_k, r_k, u_k)]` and the
/// maximisers `û`.
pub fn maximality_gap(
    p: &ProblemSpec,
    traj: &TrajectoryBundle,
    costate: &CostateBundle,
    u: &ControlGrid,
) -> (f64, ControlGrid) {
    let steps = traj.grid().steps();
    let n = traj.particles();
    let mut best = ControlGrid::zeros(n, p.dim, steps);
    let mut gap = 0.0f64;
    for k in 0..steps {
        let (x, r) = (traj.node(k), costate.node(k));
        let uhat = maximize_hamiltonian_pointwise(p, x, r);
        let g = hamiltonian_n(p, x, r, &uhat) - hamiltonian_n(p, x, r, u.node(k));
        gap = gap.max(g);
        best.node_mut(k).copy_from_slice(&uhat);
    }
    (gap, best)
}

/// Relaxed forward–backward sweep from `u = 0`.
pub fn forward_backward_sweep(
    p: &ProblemSpec,
    x0: &[f64],
    grid: &TimeGrid,
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    let u0 = ControlGrid::zeros(x0.len() / p.dim, p.dim, grid.steps());
    forward_backward_sweep_from(p, x0, grid, u0, opts)
}

pub fn forward_backward_sweep_from(
    p: &ProblemSpec,
    x0: &[f64],
    grid: &TimeGrid,
    mut u: ControlGrid,
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    if !(opts.theta > 0.0 && opts.theta <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "theta".into(),
            reason: format!("must lie in (0, 1], got {}", opts.theta),
        });
    }
    u.check_admissible(p)?;
    let mut report = SweepReport::default();
    let mut initial_cost = None;
    loop {
        let traj = simulate::integrate_forward(p, &u, x0, grid)?;
        let cost = simulate::cost_discrete(p, &traj, &u);
        let costate = integrate_costate_backward(p, &traj, &u)?;
        let c0 = *initial_cost.get_or_insert(cost);
        report.costs.push(cost);
        if cost - c0 > 10.0 * c0.abs().max(1.0) {
            report.iterations = report.update_norms.len();
            return Err(Error::Diverged(Box::new(report)));
        }
        let (gap, uhat) = maximality_gap(p, &traj, &costate, &u);
        report.residuals.push(gap.max(0.0));
        if report.converged || report.update_norms.len() == opts.max_iter {
            report.iterations = report.update_norms.len();
            debug!(
                "sweep stopped after {} iterations (converged: {}), cost {cost}",
                report.iterations, report.converged
            );
            return Ok(SweepOutcome {
                controls: u,
                trajectory: traj,
                costate,
                report,
            });
        }
        let mut change = 0.0f64;
        for (c, h) in u.values_mut().iter_mut().zip(uhat.values()) {
            let next = (1.0 - opts.theta) * *c + opts.theta * h;
            change = change.max((next - *c).abs());
            *c = next;
        }
        report.update_norms.push(change);
        report.converged = change < opts.tol;
    }
}
