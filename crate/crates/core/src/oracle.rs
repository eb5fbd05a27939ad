//! Exhaustive search over meshed controls for tiny instances.
//!
//! Only the forward integrator and the discrete cost are used, so the
//! results are independent of every solver in [`crate::pmp`].

use crate::problems::ProblemSpec;
use crate::simulate::{self, ControlGrid, TimeGrid};
use crate::{par, Error, Result};

/// Largest number of forward evaluations a search may take.
pub const BUDGET: u128 = 10_000_000;

/// Coarsest grid the time-varying search accepts.
pub const MAX_COARSE_STEPS: usize = 3;

const BLOCK: usize = 4096;

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub controls: ControlGrid,
    pub cost: f64,
    /// Mesh points examined, including those outside `K`.
    pub evaluations: u128,
}

/// `m` equispaced values on `[−M, M]`; `m = 1` gives `{0}`.
pub fn axis_mesh(half_width: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m)
        .map(|j| -half_width + 2.0 * half_width * j as f64 / (m - 1) as f64)
        .collect()
}

fn check_budget(m: usize, slots: usize) -> Result<u128> {
    let total = (m as u128).checked_pow(slots as u32).unwrap_or(u128::MAX);
    if total > BUDGET {
        return Err(Error::BudgetExceeded {
            evaluations: total,
            budget: BUDGET,
        });
    }
    Ok(total)
}

/// Minimum of `cost(index)` over `0..total`; ties go to the lowest index.
fn search<F>(total: u128, cost: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> Option<f64> + Sync + Send,
{
    let total = total as usize;
    let blocks = total.div_ceil(BLOCK);
    par::map_heavy(blocks, |b| {
        let mut best: Option<(usize, f64)> = None;
        for idx in b * BLOCK..((b + 1) * BLOCK).min(total) {
            if let Some(c) = cost(idx) {
                if best.is_none_or(|(_, bc)| c < bc) {
                    best = Some((idx, c));
                }
            }
        }
        best
    })
    .into_iter()
    .flatten()
    .fold(None, |acc: Option<(usize, f64)>, (i, c)| match acc {
        Some((_, bc)) if bc <= c => acc,
        _ => Some((i, c)),
    })
}

/// Decodes `idx` into `slots` mesh values (mixed radix, first slot fastest).
fn decode(mut idx: usize, mesh: &[f64], slots: usize) -> Vec<f64> {
    let m = mesh.len();
    (0..slots)
        .map(|_| {
            let v = mesh[idx % m];
            idx /= m;
            v
        })
        .collect()
}

fn admissible(p: &ProblemSpec, u: &[f64]) -> bool {
    u.chunks_exact(p.dim).all(|c| p.control_set.contains(c))
}

fn check_mesh(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m".into(),
            reason: "mesh needs at least one point per axis".into(),
        });
    }
    Ok(())
}

/// Best control constant in time with every component on an `m`-point mesh
/// of `[−M, M]`; mesh points outside `K` are skipped.
pub fn brute_force_constant_controls(p: &ProblemSpec, x0: &[f64], grid: &TimeGrid, m: usize) -> Result<OracleOutcome> {
    check_mesh(m)?;
    let n = x0.len() / p.dim;
    let slots = n * p.dim;
    let total = check_budget(m, slots)?;
    let mesh = axis_mesh(p.control_set.half_width(), m);
    let steps = grid.steps();
    let (idx, cost) = search(total, |idx| {
        let u = decode(idx, &mesh, slots);
        if !admissible(p, &u) {
            return None;
        }
        let grid_u = ControlGrid::constant(&u, p.dim, steps);
        simulate::evaluate(p, &grid_u, x0, grid).ok().filter(|c| c.is_finite())
    })
    .ok_or_else(|| Error::invalid("no admissible mesh point produced a finite cost"))?;
    Ok(OracleOutcome {
        controls: ControlGrid::constant(&decode(idx, &mesh, slots), p.dim, steps),
        cost,
        evaluations: total,
    })
}

/// Best nodewise control on a coarse grid (at most three steps), every
/// component on an `m`-point mesh.
pub fn brute_force_time_varying(p: &ProblemSpec, x0: &[f64], grid: &TimeGrid, m: usize) -> Result<OracleOutcome> {
    check_mesh(m)?;
    if grid.steps() > MAX_COARSE_STEPS {
        return Err(Error::InvalidParameter {
            name: "steps".into(),
            reason: format!("time-varying search takes at most {MAX_COARSE_STEPS} steps"),
        });
    }
    let n = x0.len() / p.dim;
    let slots = n * p.dim * grid.steps();
    let total = check_budget(m, slots)?;
    let mesh = axis_mesh(p.control_set.half_width(), m);
    let build = |idx: usize| ControlGrid::from_values(n, p.dim, grid.steps(), decode(idx, &mesh, slots));
    let (idx, cost) = search(total, |idx| {
        let u = build(idx).ok()?;
        if !admissible(p, u.values()) {
            return None;
        }
        simulate::evaluate(p, &u, x0, grid).ok().filter(|c| c.is_finite())
    })
    .ok_or_else(|| Error::invalid("no admissible mesh point produced a finite cost"))?;
    Ok(OracleOutcome {
        controls: build(idx)?,
        cost,
        evaluations: total,
    })
}
