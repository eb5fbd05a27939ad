//! Forward integration of the controlled particle system and of replicator
//! labels, and the discrete cost.
//!
//! Controls are piecewise constant on a uniform grid: `u_i(t) = u_i(t_k)` on
//! `[t_k, t_{k+1})`. Each step is classical RK4 with the empirical measure
//! re-evaluated at every stage from the full particle state.

use log::{debug, info};

use crate::measures::EmpiricalMeasure;
use crate::problems::{LabelDynamics, ProblemSpec, ReplicatorProblem};
use crate::{par, vec, Error, Result};

/// Uniform grid `t_k = k·T/S`, `k = 0..=S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { steps, horizon })
    }

    /// Grid over the problem horizon.
    pub fn for_problem(p: &ProblemSpec, steps: usize) -> Result<Self> {
        Self::new(steps, p.horizon)
    }

    /// Number of steps `S`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `S + 1`.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
}

/// Node values `u_i(t_k)` for `k < S`, stored `[k][i][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    particles: usize,
    dim: usize,
    steps: usize,
    values: Vec<f64>,
}

impl ControlGrid {
    pub fn zeros(particles: usize, dim: usize, steps: usize) -> Self {
        ControlGrid {
            particles,
            dim,
            steps,
            values: vec![0.0; particles * dim * steps],
        }
    }

    /// The same per-particle control (`N·d` values) at every node.
    pub fn constant(per_particle: &[f64], dim: usize, steps: usize) -> Self {
        ControlGrid {
            particles: per_particle.len() / dim,
            dim,
            steps,
            values: per_particle.repeat(steps),
        }
    }

    pub fn from_values(particles: usize, dim: usize, steps: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != particles * dim * steps {
            return Err(Error::CountMismatch {
                left: particles * dim * steps,
                right: values.len(),
            });
        }
        Ok(ControlGrid {
            particles,
            dim,
            steps,
            values,
        })
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// All particles' controls at node `k` (`N·d`).
    pub fn node(&self, k: usize) -> &[f64] {
        let w = self.particles * self.dim;
        &self.values[k * w..(k + 1) * w]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        let w = self.particles * self.dim;
        &mut self.values[k * w..(k + 1) * w]
    }

    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.dim;
        &self.node(k)[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Errors with the offending value if any node lies outside `K`.
    pub fn check_admissible(&self, p: &ProblemSpec) -> Result<()> {
        match self
            .values
            .chunks_exact(self.dim)
            .find(|u| !p.control_set.contains(u))
        {
            Some(u) => Err(Error::OutsideControlSet { value: u.to_vec() }),
            None => Ok(()),
        }
    }

    /// `max |u - other|` over all entries.
    pub fn max_diff(&self, other: &ControlGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// States `x_i(t_k)` for all nodes, stored `[k][i][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle {
    grid: TimeGrid,
    particles: usize,
    dim: usize,
    states: Vec<f64>,
}

impl TrajectoryBundle {
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
        &self.states[k * w..(k + 1) * w]
    }

    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.dim;
        &self.node(k)[i * d..(i + 1) * d]
    }

    pub fn terminal(&self) -> &[f64] {
        self.node(self.grid.steps())
    }

    /// `Ψ^N_{t_k}`.
    pub fn measure(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.dim, self.node(k).to_vec()).expect("nonempty node")
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }
}

fn check_shapes(p: &ProblemSpec, u: &ControlGrid, x0: &[f64], grid: &TimeGrid) -> Result<usize> {
    let d = p.dim;
    if x0.is_empty() || x0.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x0.len(),
        });
    }
    let n = x0.len() / d;
    if u.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: u.dim(),
        });
    }
    if u.particles() != n {
        return Err(Error::CountMismatch {
            left: n,
            right: u.particles(),
        });
    }
    if u.steps() != grid.steps() {
        return Err(Error::invalid(format!(
            "control grid has {} steps, time grid {}",
            u.steps(),
            grid.steps()
        )));
    }
    Ok(n)
}

/// One classical RK4 step of `ẋ = f(x)`, written into `next`.
pub(crate) fn rk4_step<F>(x: &[f64], dt: f64, next: &mut [f64], f: F)
where
    F: Fn(&[f64], &mut [f64]),
{
    let len = x.len();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut stage = vec![0.0; len];
    f(x, &mut k1);
    for j in 0..len {
        stage[j] = x[j] + 0.5 * dt * k1[j];
    }
    f(&stage, &mut k2);
    for j in 0..len {
        stage[j] = x[j] + 0.5 * dt * k2[j];
    }
    f(&stage, &mut k3);
    for j in 0..len {
        stage[j] = x[j] + dt * k3[j];
    }
    f(&stage, &mut k4);
    for j in 0..len {
        next[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

pub fn integrate_forward(
    p: &ProblemSpec,
    u: &ControlGrid,
    x0: &[f64],
    grid: &TimeGrid,
) -> Result<TrajectoryBundle> {
    let n = check_shapes(p, u, x0, grid)?;
    let w = n * p.dim;
    let dt = grid.dt();
    let mut states = vec![0.0; w * grid.nodes()];
    states[..w].copy_from_slice(x0);
    for k in 0..grid.steps() {
        let (done, rest) = states.split_at_mut((k + 1) * w);
        let x = &done[k * w..];
        let next = &mut rest[..w];
        let uk = u.node(k);
        rk4_step(x, dt, next, |s, out| p.velocity(s, uk, out));
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "state",
                step: k + 1,
            });
        }
    }
    Ok(TrajectoryBundle {
        grid: *grid,
        particles: n,
        dim: p.dim,
        states,
    })
}

/// Left-endpoint quadrature of `∫ L + (1/N) Σ φ(u_i)`, plus `g(Ψ_T)`.
pub fn cost_discrete(p: &ProblemSpec, traj: &TrajectoryBundle, u: &ControlGrid) -> f64 {
    let grid = traj.grid();
    let dt = grid.dt();
    let n = traj.particles() as f64;
    let mut total = 0.0;
    for k in 0..grid.steps() {
        let control: f64 = u.node(k).chunks_exact(p.dim).map(|c| p.eval_phi(c)).sum::<f64>() / n;
        let running = if p.has_running_cost() {
            p.running_cost(traj.node(k))
        } else {
            0.0
        };
        total += dt * (running + control);
    }
    total + p.terminal_cost(traj.terminal())
}

/// Convenience: integrate and evaluate the cost.
pub fn evaluate(p: &ProblemSpec, u: &ControlGrid, x0: &[f64], grid: &TimeGrid) -> Result<f64> {
    let traj = integrate_forward(p, u, x0, grid)?;
    Ok(cost_discrete(p, &traj, u))
}

/// Positions and labels of a replicator run.
#[derive(Clone, Debug)]
pub struct LabelTrajectory {
    pub positions: TrajectoryBundle,
    label_count: usize,
    /// `λ_i(t_k)`, stored `[k][i][l]`.
    labels: Vec<f64>,
    /// Steps after which labels were rescaled back onto the invariant set.
    pub renormalizations: Vec<usize>,
    /// `max_k |conserved(λ_i(t_k)) − 1|` before any rescaling.
    pub max_drift: f64,
}

impl LabelTrajectory {
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let w = self.positions.particles() * self.label_count;
        &self.labels[k * w..(k + 1) * w]
    }

    pub fn at(&self, k: usize, i: usize) -> &[f64] {
        &self.node(k)[i * self.label_count..(i + 1) * self.label_count]
    }
}

/// Drift of the conserved label quantity above which a step is rescaled.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-10;
/// Invariant violation at which integration aborts.
pub const LABEL_ABORT: f64 = 1e-6;

/// RK4 on the joint `(x, λ)` state. Labels are uncontrolled.
pub fn integrate_replicator(
    p: &ReplicatorProblem,
    u: &ControlGrid,
    x0: &[f64],
    labels0: &[f64],
    grid: &TimeGrid,
) -> Result<LabelTrajectory> {
    let spec = &p.spec;
    let n = check_shapes(spec, u, x0, grid)?;
    let d = spec.dim;
    let nl = p.labels.label_count();
    if labels0.len() != n * nl {
        return Err(Error::CountMismatch {
            left: n * nl,
            right: labels0.len(),
        });
    }
    for (i, l) in labels0.chunks_exact(nl).enumerate() {
        let violation = p.labels.violation(l);
        if violation > LABEL_ABORT {
            debug!("initial label {i} violates its invariant by {violation:e}");
            return Err(Error::LabelInvariant { step: 0, violation });
        }
    }

    let wx = n * d;
    let wl = n * nl;
    let mut joint = [x0, labels0].concat();
    let mut next = vec![0.0; joint.len()];
    let mut states = Vec::with_capacity(wx * grid.nodes());
    let mut labels = Vec::with_capacity(wl * grid.nodes());
    states.extend_from_slice(x0);
    labels.extend_from_slice(labels0);
    let mut renormalizations = Vec::new();
    let mut max_drift = 0.0f64;

    for k in 0..grid.steps() {
        let uk = u.node(k);
        rk4_step(&joint, grid.dt(), &mut next, |s, out| {
            let (xs, ls) = s.split_at(wx);
            let (ox, ol) = out.split_at_mut(wx);
            spec.velocity(xs, uk, ox);
            label_velocity(&p.labels, xs, ls, d, nl, ol);
        });
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "label state",
                step: k + 1,
            });
        }
        let mut rescaled = false;
        for l in next[wx..].chunks_exact_mut(nl) {
            let drift = (p.labels.conserved(l) - 1.0).abs();
            max_drift = max_drift.max(drift);
            let violation = p.labels.violation(l);
            if violation > LABEL_ABORT {
                return Err(Error::LabelInvariant {
                    step: k + 1,
                    violation,
                });
            }
            if drift > RENORMALIZE_THRESHOLD {
                p.labels.renormalize(l);
                rescaled = true;
            }
        }
        if rescaled {
            info!("labels renormalized after step {}", k + 1);
            renormalizations.push(k + 1);
        }
        std::mem::swap(&mut joint, &mut next);
        states.extend_from_slice(&joint[..wx]);
        labels.extend_from_slice(&joint[wx..]);
    }

    Ok(LabelTrajectory {
        positions: TrajectoryBundle {
            grid: *grid,
            particles: n,
            dim: d,
            states,
        },
        label_count: nl,
        labels,
        renormalizations,
        max_drift,
    })
}

fn label_velocity(dynamics: &LabelDynamics, xs: &[f64], ls: &[f64], d: usize, nl: usize, out: &mut [f64]) {
    par::fill_chunks(out, nl, |i, o| {
        dynamics.rhs_into(&xs[i * d..(i + 1) * d], &ls[i * nl..(i + 1) * nl], xs, o);
    });
}

/// Largest atom norm over all nodes.
pub fn max_state_norm(traj: &TrajectoryBundle) -> f64 {
    traj.states()
        .chunks_exact(traj.dim())
        .map(vec::norm)
        .fold(0.0, f64::max)
}
