//! Sweep over the particle number `N` with one report row per run.

use log::{info, warn};
use serde::Serialize;

use super::{
    build_generated, extract_control_field, lipschitz_estimate, maximality_check, phi_functional,
    r_independence_score, trial_fields, BinnedField, GeneratedPair,
};
use crate::measures::{self, support_radius, SinkhornOptions, ASSIGNMENT_CAP};
use crate::pmp::{self, SweepOptions, SweepOutcome};
use crate::problems::ProblemSpec;
use crate::simulate::TimeGrid;
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StudyOptions {
    pub sweep: SweepOptions,
    /// Bin side for the control field and the r-independence score.
    pub delta: f64,
    /// Entropic regularisation of the cross-`N` distances.
    pub sinkhorn_eps: f64,
    /// Random Lipschitz trials (and as many perturbations of `w̄`).
    pub trials: usize,
    pub max_slope: f64,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            sweep: SweepOptions::default(),
            delta: 0.05,
            sinkhorn_eps: 1e-3,
            trials: 20,
            max_slope: 2.0,
            seed: 0,
        }
    }
}

/// One row per `N`. Numeric columns of a failed run are `NaN`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    /// `converged`, `max_iter` or `failed`.
    pub status: String,
    pub iterations: usize,
    pub cost: f64,
    pub sweep_residual: f64,
    /// `max_k` of the largest phase-atom norm.
    pub support_radius: f64,
    /// Closed-form bound on the phase support, where available.
    pub support_bound: Option<f64>,
    pub lipschitz: f64,
    /// `max_k W₁(ν̄^N_k, ν̄^{N_max}_k)`, entropic.
    pub distance_to_finest: f64,
    /// Worst marginal violation among the entropic solves behind the distance.
    pub distance_marginal_error: f64,
    pub distance_converged: bool,
    pub r_independence: f64,
    /// Worst gain of a trial field over `w̄` in the limit Hamiltonian.
    pub maximality_residual: f64,
    /// `max_k |(1/N) Σ φ(uᵢ) − Φ(ρ̄|ν̄)|`.
    pub phi_gap: f64,
    /// Largest violation of `(1/N) Σ φ(uᵢ) ≥ Φ(ρ̄|ν̄) ≥ Φ(μ̄|Ψ)` over nodes.
    pub phi_chain_violation: f64,
}

#[derive(Clone, Debug)]
pub struct StudyRun {
    pub n: usize,
    pub x0: Vec<f64>,
    pub outcome: Option<SweepOutcome>,
    pub pair: Option<GeneratedPair>,
    pub field: Option<BinnedField>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<StudyRow>,
    pub runs: Vec<StudyRun>,
}

fn empty_row(n: usize) -> StudyRow {
    StudyRow {
        n,
        status: "failed".into(),
        iterations: 0,
        cost: f64::NAN,
        sweep_residual: f64::NAN,
        support_radius: f64::NAN,
        support_bound: None,
        lipschitz: f64::NAN,
        distance_to_finest: f64::NAN,
        distance_marginal_error: f64::NAN,
        distance_converged: false,
        r_independence: f64::NAN,
        maximality_residual: f64::NAN,
        phi_gap: f64::NAN,
        phi_chain_violation: f64::NAN,
    }
}

fn diagnose(p: &ProblemSpec, pair: &GeneratedPair, field: &BinnedField, opts: &StudyOptions, row: &mut StudyRow) -> Result<()> {
    let steps = pair.grid().steps();
    row.support_radius = (0..pair.grid().nodes())
        .map(|k| support_radius(pair.nu(k)))
        .fold(0.0, f64::max);
    row.support_bound = p.phase_support_bound(p.initial_support_radius());
    row.lipschitz = lipschitz_estimate(pair)?;
    row.r_independence = r_independence_score(pair, opts.delta)?;
    let trials = trial_fields(p, field, opts.trials, opts.max_slope, opts.seed);
    row.maximality_residual = maximality_check(p, pair, field, &trials)?;

    let n = pair.particles() as f64;
    let (mut gap, mut violation) = (0.0f64, 0.0f64);
    for k in 0..steps {
        let mean_phi = pair
            .controls()
            .node(k)
            .chunks_exact(p.dim)
            .map(|u| p.eval_phi(u))
            .sum::<f64>()
            / n;
        let phase = phi_functional(p, &pair.rho(k), pair.nu(k))?;
        let spatial = phi_functional(p, &pair.mu(k), &pair.psi(k))?;
        gap = gap.max((mean_phi - phase).abs());
        violation = violation.max(phase - mean_phi).max(spatial - phase);
    }
    row.phi_gap = gap;
    row.phi_chain_violation = violation;
    Ok(())
}

fn solve_one(p: &ProblemSpec, n: usize, grid: &TimeGrid, opts: &StudyOptions) -> (StudyRun, StudyRow) {
    let x0 = p.sample_initial(n, opts.seed);
    let mut row = empty_row(n);
    let mut run = StudyRun {
        n,
        x0: x0.clone(),
        outcome: None,
        pair: None,
        field: None,
        error: None,
    };
    let outcome = match pmp::forward_backward_sweep(p, &x0, grid, &opts.sweep) {
        Ok(o) => o,
        Err(e) => {
            warn!("study: N = {n} failed: {e}");
            run.error = Some(e.to_string());
            return (run, row);
        }
    };
    row.status = if outcome.report.converged { "converged" } else { "max_iter" }.into();
    row.iterations = outcome.report.iterations;
    row.cost = outcome.cost(p);
    row.sweep_residual = outcome.report.residuals.last().copied().unwrap_or(f64::NAN);
    let built = build_generated(&outcome.trajectory, &outcome.costate, &outcome.controls)
        .and_then(|pair| extract_control_field(&pair, opts.delta).map(|f| (pair, f)));
    match built.and_then(|(pair, field)| diagnose(p, &pair, &field, opts, &mut row).map(|_| (pair, field))) {
        Ok((pair, field)) => {
            run.pair = Some(pair);
            run.field = Some(field);
        }
        Err(e) => {
            warn!("study: diagnostics for N = {n} failed: {e}");
            row.status = "failed".into();
            run.error = Some(e.to_string());
        }
    }
    run.outcome = Some(outcome);
    (run, row)
}

/// Solves every `N` of the sweep from the shared sampler and fills one row
/// per run. Runs proceed concurrently; a failed run is recorded and the study
/// continues.
pub fn convergence_study(p: &ProblemSpec, ns: &[usize], grid: &TimeGrid, opts: &StudyOptions) -> Result<ConvergenceReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(Error::InvalidParameter {
            name: "n".into(),
            reason: "particle counts must be positive and strictly increasing".into(),
        });
    }
    let n_max = *ns.last().expect("nonempty");
    if n_max > ASSIGNMENT_CAP {
        return Err(Error::AssignmentCap {
            n: n_max,
            cap: ASSIGNMENT_CAP,
        });
    }
    let (runs, mut rows): (Vec<_>, Vec<_>) = par::map_heavy(ns.len(), |j| solve_one(p, ns[j], grid, opts))
        .into_iter()
        .unzip();

    if let Some(finest) = runs.last().and_then(|r| r.pair.clone()) {
        let sinkhorn = SinkhornOptions::default();
        let distances = par::map_heavy(runs.len(), |j| {
            let pair = runs[j].pair.as_ref()?;
            let solves = par::map_heavy(grid.nodes(), |k| {
                measures::w1_sinkhorn_with(pair.nu(k), finest.nu(k), opts.sinkhorn_eps, &sinkhorn)
            });
            let mut acc = (0.0f64, 0.0f64, true);
            for s in solves {
                let s = s.ok()?;
                acc = (acc.0.max(s.value), acc.1.max(s.marginal_error), acc.2 && s.converged);
            }
            Some(acc)
        });
        for (row, d) in rows.iter_mut().zip(distances) {
            if let Some((value, err, converged)) = d {
                row.distance_to_finest = value;
                row.distance_marginal_error = err;
                row.distance_converged = converged;
            }
        }
    }
    for row in &rows {
        info!(
            "study N = {}: {} cost {:.6} d {:.3e} lip {:.3} r-score {:.3e}",
            row.n, row.status, row.cost, row.distance_to_finest, row.lipschitz, row.r_independence
        );
    }
    Ok(ConvergenceReport { rows, runs })
}
