//! Exact reverse-mode differentiation of the discrete cost through the RK4
//! forward map.
//!
//! With `a_k = ∂C/∂X_k` the discrete adjoint, the stored costate is the
//! rescaled `r̂_k = −N a_k`, which matches the terminal condition
//! `r(T) = −∇_ψ g` exactly and agrees with the continuous costate up to the
//! time discretisation error.

use super::CostateBundle;
use crate::problems::ProblemSpec;
use crate::simulate::{ControlGrid, TrajectoryBundle};
use crate::{vec, Error, Result};

/// Reverse sweep through one RK4 step from `x` under control `u`, given the
/// adjoint `abar` of the step's output. Returns the adjoint of the step input
/// (without the running-cost term) and the control adjoint.
fn reverse_step(p: &ProblemSpec, x: &[f64], u: &[f64], dt: f64, abar: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = x.len();
    let d = p.dim;
    // Recompute the stages.
    let mut k = vec![0.0; w];
    let mut s2 = vec![0.0; w];
    let mut s3 = vec![0.0; w];
    let mut s4 = vec![0.0; w];
    p.velocity(x, u, &mut k);
    for j in 0..w {
        s2[j] = x[j] + 0.5 * dt * k[j];
    }
    p.velocity(&s2, u, &mut k);
    for j in 0..w {
        s3[j] = x[j] + 0.5 * dt * k[j];
    }
    p.velocity(&s3, u, &mut k);
    for j in 0..w {
        s4[j] = x[j] + dt * k[j];
    }

    let mut xbar = abar.to_vec();
    let mut ubar = vec![0.0; w];
    let mut kbar: Vec<f64> = abar.iter().map(|a| dt / 6.0 * a).collect();
    let mut sbar = vec![0.0; w];
    // (stage state, quadrature weight of its slope, coefficient of the
    // previous slope in the stage state)
    let stages: [(&[f64], f64, f64); 4] = [
        (&s4, 1.0 / 6.0, 1.0),
        (&s3, 1.0 / 3.0, 0.5),
        (&s2, 1.0 / 3.0, 0.5),
        (x, 1.0 / 6.0, 0.0),
    ];
    for (idx, (s, _, feed)) in stages.iter().enumerate() {
        // kbar holds the full adjoint of this stage's slope.
        p.velocity_vjp(s, u, &kbar, &mut sbar);
        let h = p.activations(s);
        for i in 0..w / d {
            for a in 0..d {
                ubar[i * d + a] += h[i] * kbar[i * d + a];
            }
        }
        vec::axpy(1.0, &sbar, &mut xbar);
        if idx + 1 < stages.len() {
            let next_weight = stages[idx + 1].1;
            for j in 0..w {
                kbar[j] = dt * next_weight * abar[j] + dt * feed * sbar[j];
            }
        }
    }
    (xbar, ubar)
}

/// The rescaled exact discrete adjoint `r̂_k = −N ∂C/∂X_k` at every node.
pub fn discrete_costate(p: &ProblemSpec, traj: &TrajectoryBundle, u: &ControlGrid) -> Result<CostateBundle> {
    let grid = *traj.grid();
    let n = traj.particles();
    let w = n * p.dim;
    let dt = grid.dt();
    let s = grid.steps();
    let scale = -(n as f64);
    let mut values = vec![0.0; w * grid.nodes()];
    let terminal = p.terminal_costate(traj.terminal());
    // a_S = ∂g/∂X_S = −r(T)/N.
    let mut a: Vec<f64> = terminal.iter().map(|r| r / scale).collect();
    values[s * w..].copy_from_slice(&terminal);
    let mut gl = vec![0.0; w];
    for k in (0..s).rev() {
        let x = traj.node(k);
        let (mut xbar, _) = reverse_step(p, x, u.node(k), dt, &a);
        if p.has_running_cost() {
            p.running_cost_gradient(x, &mut gl);
            vec::axpy(dt / n as f64, &gl, &mut xbar);
        }
        if xbar.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "discrete adjoint",
                step: k,
            });
        }
        for (v, ak) in values[k * w..(k + 1) * w].iter_mut().zip(&xbar) {
            *v = scale * ak;
        }
        a = xbar;
    }
    Ok(CostateBundle::from_parts(grid, n, p.dim, values))
}

/// Gradient of the discrete cost with respect to every `u_i(t_k)`, laid out
/// like the control grid. Each step is differentiated exactly given the
/// costate at its right node, so the result is exact when `costate` comes
/// from [`discrete_costate`] and approximates it to the time discretisation
/// error when it comes from the backward costate integrator. Minus the
/// gradient is a descent direction.
pub fn adjoint_gradient(
    p: &ProblemSpec,
    traj: &TrajectoryBundle,
    u: &ControlGrid,
    costate: &CostateBundle,
) -> ControlGrid {
    let grid = traj.grid();
    let n = traj.particles();
    let dt = grid.dt();
    let inv_n = 1.0 / n as f64;
    let mut g = ControlGrid::zeros(n, p.dim, grid.steps());
    for k in 0..grid.steps() {
        let abar: Vec<f64> = costate.node(k + 1).iter().map(|r| -r * inv_n).collect();
        let (_, ubar) = reverse_step(p, traj.node(k), u.node(k), dt, &abar);
        let uk = u.node(k);
        for ((gk, ub), uc) in g.node_mut(k).iter_mut().zip(&ubar).zip(uk) {
            *gk = ub + dt * inv_n * p.control_weight * uc;
        }
    }
    g
}
