//! Generated measures of a solved particle problem and the diagnostics that
//! track their many-particle limit.
//!
//! A solved run yields, at every time node, the phase measure
//! `ν̄ = (1/N) Σ δ_{(xᵢ, rᵢ)}` and the vector measure `ρ̄ = (1/N) Σ uᵢ δ_{(xᵢ, rᵢ)}`.
//! The limit control is a feedback field `w̄(t, x)` with `ρ̄ = w̄ ν̄`; here it is
//! estimated by averaging payloads over cubic bins in `x`.

mod fields;
mod study;

use std::collections::BTreeMap;

use crate::measures::{self, push_x, AtomicMeasure, EmpiricalMeasure, PhaseMeasure, VectorMeasure};
use crate::pmp::CostateBundle;
use crate::problems::ProblemSpec;
use crate::simulate::{ControlGrid, TimeGrid, TrajectoryBundle};
use crate::{par, vec, Error, Result};

pub use fields::{trial_fields, BinnedField, ConstantField, ControlField, LipschitzField, PerturbedField};
pub use study::{convergence_study, ConvergenceReport, StudyOptions, StudyRow, StudyRun};

/// Atoms closer than this in every coordinate count as one atom.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// `ν̄` at every node, with the controls `uᵢ(t_k)` as payload for `k < S`.
#[derive(Clone, Debug)]
pub struct GeneratedPair {
    grid: TimeGrid,
    phase: Vec<PhaseMeasure>,
    controls: ControlGrid,
}

impl GeneratedPair {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.controls.particles()
    }

    pub fn dim(&self) -> usize {
        self.controls.dim()
    }

    pub fn nu(&self, k: usize) -> &PhaseMeasure {
        &self.phase[k]
    }

    pub fn psi(&self, k: usize) -> EmpiricalMeasure {
        push_x(&self.phase[k])
    }

    /// `ρ̄` at node `k < S`.
    pub fn rho(&self, k: usize) -> VectorMeasure<PhaseMeasure> {
        VectorMeasure::new(self.phase[k].clone(), self.dim(), self.controls.node(k).to_vec())
            .expect("payload shape fixed at construction")
    }

    /// `μ̄`, the control measure over `Ψ`, at node `k < S`.
    pub fn mu(&self, k: usize) -> VectorMeasure<EmpiricalMeasure> {
        VectorMeasure::new(self.psi(k), self.dim(), self.controls.node(k).to_vec())
            .expect("payload shape fixed at construction")
    }

    pub fn controls(&self) -> &ControlGrid {
        &self.controls
    }

    /// The controls of node `k` as a field on the atom positions: defined
    /// exactly at each `xᵢ(t_k)` (first matching atom wins).
    pub fn atom_field(&self) -> AtomField<'_> {
        AtomField { pair: self }
    }
}

pub struct AtomField<'a> {
    pair: &'a GeneratedPair,
}

impl ControlField for AtomField<'_> {
    fn value(&self, node: usize, x: &[f64]) -> Option<Vec<f64>> {
        let nu = self.pair.nu(node);
        (0..nu.len())
            .find(|&i| nu.x(i) == x)
            .map(|i| self.pair.controls.at(node, i).to_vec())
    }
}

pub fn build_generated(traj: &TrajectoryBundle, costate: &CostateBundle, u: &ControlGrid) -> Result<GeneratedPair> {
    let grid = *traj.grid();
    let (n, d) = (traj.particles(), traj.dim());
    let shapes = [
        (costate.particles(), costate.dim(), costate.grid().steps()),
        (u.particles(), u.dim(), u.steps()),
    ];
    for (cn, cd, cs) in shapes {
        if cn != n {
            return Err(Error::CountMismatch { left: n, right: cn });
        }
        if cd != d {
            return Err(Error::DimensionMismatch { expected: d, found: cd });
        }
        if cs != grid.steps() {
            return Err(Error::invalid(format!(
                "time grids differ: {} vs {cs} steps",
                grid.steps()
            )));
        }
    }
    let phase = (0..grid.nodes())
        .map(|k| PhaseMeasure::from_parts(d, traj.node(k), costate.node(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedPair {
        grid,
        phase,
        controls: u.clone(),
    })
}

/// Partition of atom indices into coincidence groups, in order of first
/// appearance.
fn coincidence_groups<M: AtomicMeasure>(m: &M) -> Vec<Vec<usize>> {
    let n = m.len();
    let mut group_of = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if group_of[i] != usize::MAX {
            continue;
        }
        let rep = m.atom(i);
        let g = groups.len();
        let mut members = vec![i];
        group_of[i] = g;
        for j in i + 1..n {
            if group_of[j] == usize::MAX
                && m.atom(j).iter().zip(rep).all(|(a, b)| (a - b).abs() <= COINCIDENCE_TOL)
            {
                group_of[j] = g;
                members.push(j);
            }
        }
        groups.push(members);
    }
    groups
}

/// `Φ(ρ|ν) = ∫ φ(dρ/dν) dν` for a vector measure over `base`. The density at
/// a distinct atom is the mean payload of the atoms coinciding with it.
pub fn phi_functional<B>(p: &ProblemSpec, rho: &VectorMeasure<B>, base: &B) -> Result<f64>
where
    B: AtomicMeasure,
{
    if rho.base().atom_dim() != base.atom_dim() || rho.base().coords() != base.coords() {
        return Err(Error::invalid("vector measure is not defined over the given base"));
    }
    let n = base.len() as f64;
    let q = rho.payload_dim();
    let total = coincidence_groups(base)
        .iter()
        .map(|g| {
            let mut mean = vec![0.0; q];
            for &i in g {
                vec::axpy(1.0 / g.len() as f64, rho.payload(i), &mut mean);
            }
            g.len() as f64 / n * p.eval_phi(&mean)
        })
        .sum();
    Ok(total)
}

/// Largest `W₁(ν̄_{k+1}, ν̄_k) / Δt` over adjacent nodes, by exact assignment.
pub fn lipschitz_estimate(pair: &GeneratedPair) -> Result<f64> {
    let grid = pair.grid();
    if grid.nodes() < 2 {
        return Err(Error::invalid("need at least two time nodes"));
    }
    let speeds = par::map_heavy(grid.steps(), |k| {
        measures::w1_exact_assignment(pair.nu(k + 1), pair.nu(k)).map(|w| w / grid.dt())
    });
    speeds
        .into_iter()
        .try_fold(0.0f64, |acc, s| s.map(|s| acc.max(s)))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta".into(),
            reason: format!("bin width must be positive, got {delta}"),
        })
    }
}

fn bin_of(x: &[f64], delta: f64) -> Vec<i64> {
    x.iter().map(|c| (c / delta).floor() as i64).collect()
}

fn bins(pair: &GeneratedPair, k: usize, delta: f64) -> BTreeMap<Vec<i64>, Vec<usize>> {
    let nu = pair.nu(k);
    let mut map: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for i in 0..nu.len() {
        map.entry(bin_of(nu.x(i), delta)).or_default().push(i);
    }
    map
}

/// Mass-weighted payload spread within `x`-bins of side `delta`, averaged
/// over the control nodes. A bin's spread is the largest pairwise distance
/// between its payloads; bins with one atom contribute nothing.
pub fn r_independence_score(pair: &GeneratedPair, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let steps = pair.grid().steps();
    let n = pair.particles() as f64;
    let per_node = par::map_heavy(steps, |k| {
        let u = pair.controls();
        bins(pair, k, delta)
            .values()
            .filter(|members| members.len() > 1)
            .map(|members| {
                let mut spread = 0.0f64;
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        spread = spread.max(vec::dist(u.at(k, i), u.at(k, j)));
                    }
                }
                members.len() as f64 / n * spread
            })
            .fold(0.0, |acc, s| acc + s)
    });
    Ok(per_node.iter().fold(0.0, |acc, s| acc + s) / steps as f64)
}

/// Piecewise-constant `w̄(t_k, ·)`: the mean payload of each occupied bin.
pub fn extract_control_field(pair: &GeneratedPair, delta: f64) -> Result<BinnedField> {
    check_delta(delta)?;
    let d = pair.dim();
    let u = pair.controls();
    let nodes = (0..pair.grid().steps())
        .map(|k| {
            bins(pair, k, delta)
                .into_iter()
                .map(|(key, members)| {
                    let mut mean = vec![0.0; d];
                    for &i in &members {
                        vec::axpy(1.0 / members.len() as f64, u.at(k, i), &mut mean);
                    }
                    (key, mean)
                })
                .collect()
        })
        .collect();
    Ok(BinnedField::new(delta, d, nodes))
}

/// `ℋ(ν, ω) = ∫ ⟨r, v(x, π¹ν) + h(x, π¹ν) ω(x)⟩ dν − L(π¹ν) − ∫ φ(ω(x)) dν`,
/// with `ω` read at time node `node`.
pub fn limit_hamiltonian(p: &ProblemSpec, nu: &PhaseMeasure, omega: &dyn ControlField, node: usize) -> Result<f64> {
    let psi = push_x(nu);
    let n = nu.len();
    let terms = par::map_range(n, |i| -> Result<(f64, f64)> {
        let (x, r) = (nu.x(i), nu.r(i));
        let w = omega.value(node, x).ok_or_else(|| Error::FieldUndefined {
            node,
            x: x.to_vec(),
        })?;
        if w.len() != p.dim {
            return Err(Error::DimensionMismatch {
                expected: p.dim,
                found: w.len(),
            });
        }
        if !p.control_set.contains(&w) {
            return Err(Error::OutsideControlSet { value: w });
        }
        let mut vel = p.eval_v(x, &psi);
        vec::axpy(p.eval_h(x, &psi), &w, &mut vel);
        Ok((vec::dot(r, &vel), p.eval_phi(&w)))
    });
    let (mut transport, mut control) = (0.0, 0.0);
    for t in terms {
        let (a, b) = t?;
        transport += a;
        control += b;
    }
    Ok((transport - control) / n as f64 - p.eval_l(&psi))
}

/// `max_{k < S, ω ∈ trials} [ℋ(ν̄_k, ω) − ℋ(ν̄_k, w̄(t_k, ·))]`.
pub fn maximality_check(
    p: &ProblemSpec,
    pair: &GeneratedPair,
    field: &dyn ControlField,
    trials: &[Box<dyn ControlField + '_>],
) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::invalid("maximality check needs at least one trial field"));
    }
    let per_node = par::map_heavy(pair.grid().steps(), |k| -> Result<f64> {
        let nu = pair.nu(k);
        let reference = limit_hamiltonian(p, nu, field, k)?;
        let mut worst = f64::NEG_INFINITY;
        for t in trials {
            worst = worst.max(limit_hamiltonian(p, nu, t.as_ref(), k)? - reference);
        }
        Ok(worst)
    });
    per_node
        .into_iter()
        .try_fold(f64::NEG_INFINITY, |acc, r| r.map(|r| acc.max(r)))
}

/// Largest difference quotient `|u_{j+1} − u_j| / |x_{j+1} − x_j|` of the
/// map from initial position to control at `t = 0`, over neighbouring atoms
/// (in sorted order) whose midpoint lies within `window` of the origin.
/// One-dimensional problems only.
pub fn control_map_lipschitz(x0: &[f64], u0: &[f64], window: f64) -> Result<f64> {
    if x0.len() != u0.len() {
        return Err(Error::CountMismatch {
            left: x0.len(),
            right: u0.len(),
        });
    }
    let mut order: Vec<usize> = (0..x0.len()).collect();
    order.sort_by(|&a, &b| x0[a].total_cmp(&x0[b]));
    let mut best = 0.0f64;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let gap = x0[b] - x0[a];
        if gap > 0.0 && (0.5 * (x0[a] + x0[b])).abs() <= window {
            best = best.max((u0[b] - u0[a]).abs() / gap);
        }
    }
    Ok(best)
}
