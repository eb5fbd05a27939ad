//! Acceptance suite: one line per criterion, exit status 1 if any fails.
//!
//! Criteria 4 to 7 and 9 share one model-case study over
//! N ∈ {8, 16, 32, 64, 128, 256} on a 20-step grid.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfpmp::meanfield::{
    self, convergence_study, trial_fields, ConvergenceReport, StudyOptions,
};
use mfpmp::oracle;
use mfpmp::pmp::{self, DirectOptions, SweepOptions};
use mfpmp::problems::{build, catalog, LabelDynamics, Params, Problem};
use mfpmp::simulate::{self, integrate_replicator};
use mfpmp::{ControlGrid, EmpiricalMeasure, ProblemSpec, TimeGrid};

// ---- pinned tolerances ---------------------------------------------------

const SATURATION_TOL: f64 = 1e-9;
const ORACLE_COST_TOL: f64 = 1e-3;
const COSTATE_TERMINAL_TOL: f64 = 1e-8;
const COSTATE_CONSTANCY_TOL: f64 = 1e-9;
const ADJOINT_REL_TOL: f64 = 1e-5;
const ADJOINT_FD_STEP: f64 = 1e-6;
const DIFFERENTIAL_REL_TOL: f64 = 1e-6;
const DIFFERENTIAL_FD_STEP: f64 = 1e-5;
const SUPPORT_CONSTANCY_TOL: f64 = 1e-6;
const LIPSCHITZ_SPREAD: f64 = 2.0;
const DISTANCE_NOISE: f64 = 0.10;
const SCORE_RATIO: f64 = 0.5;
const PHI_TOL: f64 = 1e-12;
const MAXIMALITY_TOL: f64 = 5e-3;
const CONSISTENCY_TOL: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 1e-8;
const CONSERVATION_RATE_TOL: f64 = 1e-10;
const CONTROL_MAP_GROWTH: f64 = 2.0;
const CONTROL_MAP_WINDOW: f64 = 0.25;

const STUDY_SIZES: [usize; 6] = [8, 16, 32, 64, 128, 256];
const STUDY_STEPS: usize = 20;
/// The study sweeps stop only once an update leaves every control unchanged,
/// i.e. at the exact floating-point fixed point.
const STUDY_SWEEP_TOL: f64 = f64::MIN_POSITIVE;
const DELTA: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(checks: &[(bool, String)]) -> Self {
        let pass = checks.iter().all(|(ok, _)| *ok);
        let detail = checks
            .iter()
            .map(|(ok, s)| format!("[{}] {s}", if *ok { "ok" } else { "FAIL" }))
            .collect::<Vec<_>>()
            .join("; ");
        Verdict { pass, detail }
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let secs = elapsed.as_secs_f64();
    (secs < limit_s, format!("runtime {secs:.2} s < {limit_s} s"))
}

fn particle(id: &str, params: &[(&str, f64)]) -> ProblemSpec {
    let params: Params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    build(id, &params).unwrap().spec().clone()
}

fn model() -> ProblemSpec {
    particle("model_case", &[])
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = analytic.iter().chain(reference).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        max_abs_diff(analytic, reference) / scale
    }
}

// ---- criterion 1 ---------------------------------------------------------

fn model_case_two_particles() -> Verdict {
    let start = Instant::now();
    let m = model();
    let grid = TimeGrid::new(100, 1.0).unwrap();
    let x0 = [-0.5, 0.5];
    let oracle = oracle::brute_force_constant_controls(&m, &x0, &grid, 41).unwrap();
    let sweep = pmp::forward_backward_sweep(&m, &x0, &grid, &SweepOptions::default()).unwrap();
    let direct = pmp::direct_optimize(&m, &x0, &grid, &ControlGrid::zeros(2, 1, 100), &DirectOptions::default()).unwrap();

    let saturated = |u: &ControlGrid| u.values().iter().map(|c| (c.abs() - 1.0).abs()).fold(0.0, f64::max);
    let (sweep_sat, direct_sat) = (saturated(&sweep.controls), saturated(&direct.controls));
    let (sweep_cost, direct_cost) = (sweep.cost(&m), direct.cost());

    let xt = sweep.trajectory.terminal();
    let mean = 0.5 * (xt[0] + xt[1]);
    let target = [xt[0] - mean, xt[1] - mean];
    let (mut terminal_err, mut drift) = (0.0f64, 0.0f64);
    let end = sweep.costate.node(100).to_vec();
    for k in 0..grid.nodes() {
        terminal_err = terminal_err.max(max_abs_diff(sweep.costate.node(k), &target));
        drift = drift.max(max_abs_diff(sweep.costate.node(k), &end));
    }
    Verdict::new(&[
        (
            sweep_sat <= SATURATION_TOL && direct_sat <= SATURATION_TOL,
            format!("saturation gap sweep {sweep_sat:.1e}, direct {direct_sat:.1e} <= {SATURATION_TOL:e}"),
        ),
        (
            (sweep_cost - oracle.cost).abs() <= ORACLE_COST_TOL && (direct_cost - oracle.cost).abs() <= ORACLE_COST_TOL,
            format!(
                "cost sweep {sweep_cost:.6}, direct {direct_cost:.6}, oracle {:.6} (tol {ORACLE_COST_TOL:e})",
                oracle.cost
            ),
        ),
        (
            terminal_err <= COSTATE_TERMINAL_TOL,
            format!("costate vs x(T) - mean {terminal_err:.1e} <= {COSTATE_TERMINAL_TOL:e}"),
        ),
        (
            drift <= COSTATE_CONSTANCY_TOL,
            format!("costate drift in time {drift:.1e} <= {COSTATE_CONSTANCY_TOL:e}"),
        ),
        within(start.elapsed(), 10.0),
    ])
}

// ---- criterion 2 ---------------------------------------------------------

fn adjoint_validation() -> Verdict {
    let start = Instant::now();
    let ids: Vec<&str> = catalog().iter().map(|e| e.id).collect();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for instance in 0..20u64 {
        let id = ids[instance as usize % ids.len()];
        let p = particle(id, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = rng.random_range(1..=8usize);
        let steps = rng.random_range(2..=20usize);
        let grid = TimeGrid::for_problem(&p, steps).unwrap();
        let x0 = p.sample_initial(n, instance);
        let m = p.control_set.half_width();
        let mut values: Vec<f64> = (0..n * p.dim * steps).map(|_| rng.random_range(-m..=m)).collect();
        for c in values.chunks_exact_mut(p.dim) {
            p.control_set.project(c);
        }
        let u = ControlGrid::from_values(n, p.dim, steps, values).unwrap();
        let traj = simulate::integrate_forward(&p, &u, &x0, &grid).unwrap();
        let costate = pmp::discrete_costate(&p, &traj, &u).unwrap();
        let g = pmp::adjoint_gradient(&p, &traj, &u, &costate);
        let fd: Vec<f64> = (0..u.values().len())
            .map(|c| {
                let mut up = u.clone();
                let mut um = u.clone();
                up.values_mut()[c] += ADJOINT_FD_STEP;
                um.values_mut()[c] -= ADJOINT_FD_STEP;
                let cp = simulate::evaluate(&p, &up, &x0, &grid).unwrap();
                let cm = simulate::evaluate(&p, &um, &x0, &grid).unwrap();
                (cp - cm) / (2.0 * ADJOINT_FD_STEP)
            })
            .collect();
        let e = rel_err(g.values(), &fd);
        if e >= worst {
            worst = e;
            worst_at = format!("{id} N={n} S={steps}");
        }
    }
    Verdict::new(&[
        (
            worst <= ADJOINT_REL_TOL,
            format!("20 instances, worst relative error {worst:.1e} ({worst_at}) <= {ADJOINT_REL_TOL:e}"),
        ),
        within(start.elapsed(), 60.0),
    ])
}

// ---- criterion 3 ---------------------------------------------------------

/// `N ∂F/∂y_i` by central differences, row-major `[output][axis]`.
fn fd_atom<F: Fn(&EmpiricalMeasure) -> Vec<f64>>(f: F, atoms: &[f64], d: usize, i: usize) -> Vec<f64> {
    let n = (atoms.len() / d) as f64;
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|b| {
            let mut plus = atoms.to_vec();
            let mut minus = atoms.to_vec();
            plus[i * d + b] += DIFFERENTIAL_FD_STEP;
            minus[i * d + b] -= DIFFERENTIAL_FD_STEP;
            let fp = f(&EmpiricalMeasure::new(d, plus).unwrap());
            let fm = f(&EmpiricalMeasure::new(d, minus).unwrap());
            fp.iter()
                .zip(&fm)
                .map(|(p, m)| n * (p - m) / (2.0 * DIFFERENTIAL_FD_STEP))
                .collect()
        })
        .collect();
    (0..cols[0].len())
        .flat_map(|a| cols.iter().map(move |c| c[a]))
        .collect()
}

fn wasserstein_differentials() -> Verdict {
    let start = Instant::now();
    let problems = [
        model(),
        particle("alignment", &[]),
        particle("alignment", &[("dim", 1.0), ("decay", 1.5), ("confinement", 0.3)]),
        particle("zero_drift", &[("dim", 2.0)]),
    ];
    let mut worst = [0.0f64; 3];
    let mut cases = 0;
    for (which, p) in problems.iter().enumerate() {
        let d = p.dim;
        for n in [2usize, 4, 8, 16] {
            let atoms = particle("alignment", &[("dim", d as f64)]).sample_initial(n, 7 + n as u64);
            let psi = EmpiricalMeasure::new(d, atoms.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(which as u64 * 100 + n as u64);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..n {
                let yi = &atoms[i * d..(i + 1) * d];
                let ev = rel_err(&p.eval_grad_psi_v(&x, &psi, yi), &fd_atom(|m| p.eval_v(&x, m), &atoms, d, i));
                let eh = rel_err(&p.eval_grad_psi_h(&x, &psi, yi), &fd_atom(|m| vec![p.eval_h(&x, m)], &atoms, d, i));
                let el = rel_err(&p.eval_grad_psi_l(&psi, yi), &fd_atom(|m| vec![p.eval_l(m)], &atoms, d, i));
                for (w, e) in worst.iter_mut().zip([ev, eh, el]) {
                    *w = w.max(e);
                }
                cases += 1;
            }
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    Verdict::new(&[
        (
            max <= DIFFERENTIAL_REL_TOL,
            format!(
                "{cases} atoms, N in {{2,4,8,16}}: worst relative error v {:.1e}, h {:.1e}, L {:.1e} <= {DIFFERENTIAL_REL_TOL:e}",
                worst[0], worst[1], worst[2]
            ),
        ),
        within(start.elapsed(), 10.0),
    ])
}

// ---- shared study --------------------------------------------------------

fn run_study() -> (ConvergenceReport, Duration) {
    let m = model();
    let grid = TimeGrid::new(STUDY_STEPS, 1.0).unwrap();
    let opts = StudyOptions {
        sweep: SweepOptions {
            tol: STUDY_SWEEP_TOL,
            ..SweepOptions::default()
        },
        delta: DELTA,
        ..StudyOptions::default()
    };
    let start = Instant::now();
    let report = convergence_study(&m, &STUDY_SIZES, &grid, &opts).unwrap();
    (report, start.elapsed())
}

fn print_study(report: &ConvergenceReport) {
    println!("     N  status     support   bound     lipschitz  d(N)      r-score   max-resid  phi-gap");
    for r in &report.rows {
        println!(
            "  {:>4}  {:<9}  {:.6}  {:.6}  {:.6}   {:.3e} {:.3e} {:+.2e}  {:.1e}",
            r.n,
            r.status,
            r.support_radius,
            r.support_bound.unwrap_or(f64::NAN),
            r.lipschitz,
            r.distance_to_finest,
            r.r_independence,
            r.maximality_residual,
            r.phi_gap
        );
    }
}

// ---- criterion 4 ---------------------------------------------------------

fn uniform_bounds(report: &ConvergenceReport, elapsed: Duration) -> Verdict {
    let rows = &report.rows;
    let radii: Vec<f64> = rows.iter().map(|r| r.support_radius).collect();
    let lo = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound = rows[0].support_bound.unwrap_or(f64::NAN);
    let lips: Vec<f64> = rows.iter().map(|r| r.lipschitz).collect();
    let lip_lo = lips.iter().cloned().fold(f64::INFINITY, f64::min);
    let lip_hi = lips.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Verdict::new(&[
        (
            rows.iter().all(|r| r.status == "converged"),
            "every sweep converged".into(),
        ),
        (
            hi - lo <= SUPPORT_CONSTANCY_TOL,
            format!("support radius spread {:.3e} (from {lo:.6} to {hi:.6}) <= {SUPPORT_CONSTANCY_TOL:e}", hi - lo),
        ),
        (hi <= bound, format!("support radius {hi:.6} <= bound {bound:.6}")),
        (
            lip_hi <= LIPSCHITZ_SPREAD * lip_lo,
            format!("lipschitz range [{lip_lo:.4}, {lip_hi:.4}], ratio {:.3} <= {LIPSCHITZ_SPREAD}", lip_hi / lip_lo),
        ),
        within(elapsed, 120.0),
    ])
}

// ---- criterion 5 ---------------------------------------------------------

fn distance_to_finest(report: &ConvergenceReport) -> Verdict {
    let d: Vec<f64> = report.rows.iter().map(|r| r.distance_to_finest).collect();
    let monotone = d.windows(2).all(|w| w[1] <= (1.0 + DISTANCE_NOISE) * w[0]);
    let marginal = report.rows.iter().map(|r| r.distance_marginal_error).fold(0.0, f64::max);
    let listing = d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ");
    Verdict::new(&[
        (
            d.iter().all(|v| v.is_finite()),
            "all distances finite".into(),
        ),
        (
            monotone,
            format!("d(N) = [{listing}] non-increasing within {:.0}%", 100.0 * DISTANCE_NOISE),
        ),
        (true, format!("entropic eps 1e-3, worst marginal violation {marginal:.1e}")),
    ])
}

// ---- criterion 6 ---------------------------------------------------------

fn control_density(report: &ConvergenceReport) -> Verdict {
    let first = &report.rows[0];
    let last = report.rows.last().unwrap();
    let chain = report.rows.iter().map(|r| r.phi_chain_violation).fold(0.0, f64::max);
    let gap = report.rows.iter().map(|r| r.phi_gap).fold(0.0, f64::max);
    Verdict::new(&[
        (
            last.r_independence <= SCORE_RATIO * first.r_independence,
            format!(
                "r-independence score N={}: {:.3e} <= {SCORE_RATIO} x N={}: {:.3e}",
                last.n, last.r_independence, first.n, first.r_independence
            ),
        ),
        (
            chain <= PHI_TOL,
            format!("Phi chain violation {chain:.1e} <= {PHI_TOL:e} over all nodes and runs"),
        ),
        (gap <= PHI_TOL, format!("equality gap on distinct atoms {gap:.1e} <= {PHI_TOL:e}")),
    ])
}

// ---- criterion 7 ---------------------------------------------------------

fn maximality(report: &ConvergenceReport) -> Verdict {
    let m = model();
    let run = report.runs.iter().find(|r| r.n == 128).unwrap();
    let pair = run.pair.as_ref().unwrap();
    let field = run.field.as_ref().unwrap();
    let trials = trial_fields(&m, field, 20, 2.0, 11);
    let residual = meanfield::maximality_check(&m, pair, field, &trials).unwrap();

    let mut identity = 0.0f64;
    let atoms = pair.atom_field();
    for k in 0..pair.grid().steps() {
        let nu = pair.nu(k);
        let limit = meanfield::limit_hamiltonian(&m, nu, &atoms, k).unwrap();
        let finite = pmp::hamiltonian_n(&m, &nu.x_coords(), &nu.r_coords(), pair.controls().node(k));
        identity = identity.max((limit - finite).abs());
    }
    Verdict::new(&[
        (
            residual <= MAXIMALITY_TOL,
            format!(
                "N=128, {} trials (w, zero, 20 Lipschitz slope <= 2, 20 perturbations): residual {residual:+.2e} <= {MAXIMALITY_TOL:e}",
                trials.len()
            ),
        ),
        (
            identity <= CONSISTENCY_TOL,
            format!("limit Hamiltonian vs H_N {identity:.1e} <= {CONSISTENCY_TOL:e}"),
        ),
    ])
}

// ---- criterion 8 ---------------------------------------------------------

fn replicator() -> Verdict {
    let start = Instant::now();
    let Problem::Replicator(markov) = build("replicator_markov", &Params::new()).unwrap() else {
        unreachable!()
    };
    let grid = TimeGrid::new(100, 1.0).unwrap();
    let run = integrate_replicator(&markov, &ControlGrid::zeros(1, 1, 100), &[0.0], &[1.0, 0.0], &grid).unwrap();
    let mut closed = 0.0f64;
    let mut mass = 0.0f64;
    for k in 0..grid.nodes() {
        let e = (-2.0 * grid.time(k)).exp();
        let l = run.at(k, 0);
        closed = closed.max((l[0] - (0.5 + 0.5 * e)).abs()).max((l[1] - (0.5 - 0.5 * e)).abs());
        mass = mass.max((l[0] + l[1] - 1.0).abs());
    }
    let markov_rate = run.max_drift.max(mass) / grid.horizon();

    let params: Params = [("slope".to_string(), 0.0), ("horizon".to_string(), 10.0)].into_iter().collect();
    let Problem::Replicator(entropic) = build("replicator_entropic", &params).unwrap() else {
        unreachable!()
    };
    let grid = TimeGrid::new(200, 10.0).unwrap();
    let n = 6;
    let x0 = entropic.spec.sample_initial(n, 2);
    let l0 = entropic.sample_labels(n, 2);
    let run = integrate_replicator(&entropic, &ControlGrid::zeros(n, 1, 200), &x0, &l0, &grid).unwrap();
    let labels = &entropic.labels;
    let mut conserved = 0.0f64;
    let mut monotone = true;
    for i in 0..n {
        for k in 0..grid.nodes() {
            conserved = conserved.max((labels.conserved(run.at(k, i)) - 1.0).abs());
            if k > 0 && labels.entropy(run.at(k, i)) < labels.entropy(run.at(k - 1, i)) - 1e-15 {
                monotone = false;
            }
        }
    }
    let entropic_rate = run.max_drift.max(conserved) / grid.horizon();
    let spread = |k: usize| {
        (0..n)
            .flat_map(|i| run.at(k, i).iter().map(|l| (l - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    };
    let (before, after) = (spread(0), spread(200));
    let is_entropic = matches!(labels, LabelDynamics::Entropic { .. });
    Verdict::new(&[
        (
            closed <= CLOSED_FORM_TOL,
            format!("2-state chain vs closed form {closed:.1e} <= {CLOSED_FORM_TOL:e} at S=100"),
        ),
        (
            markov_rate <= CONSERVATION_RATE_TOL,
            format!("chain mass drift {markov_rate:.1e} per unit time <= {CONSERVATION_RATE_TOL:e}"),
        ),
        (
            entropic_rate <= CONSERVATION_RATE_TOL,
            format!("entropic conserved mass drift {entropic_rate:.1e} per unit time <= {CONSERVATION_RATE_TOL:e}"),
        ),
        (
            is_entropic && monotone && after < before,
            format!("constant payoff: entropy non-decreasing, distance to uniform {before:.3} -> {after:.2e}"),
        ),
        within(start.elapsed(), 10.0),
    ])
}

// ---- criterion 9 ---------------------------------------------------------

fn control_map_blow_up(report: &ConvergenceReport) -> Verdict {
    let quotient = |n: usize| {
        let run = report.runs.iter().find(|r| r.n == n).unwrap();
        let u0 = run.outcome.as_ref().unwrap().controls.node(0).to_vec();
        meanfield::control_map_lipschitz(&run.x0, &u0, CONTROL_MAP_WINDOW).unwrap()
    };
    let (small, large) = (quotient(16), quotient(256));
    Verdict::new(&[(
        large >= CONTROL_MAP_GROWTH * small,
        format!(
            "difference quotient near 0: N=16 {small:.3}, N=256 {large:.3}, growth {:.2} >= {CONTROL_MAP_GROWTH}",
            large / small
        ),
    )])
}

fn main() {
    // Plain `cargo test` passes harness flags such as `--nocapture`; any
    // positional argument is a name filter this suite does not support.
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    verdicts.push((1, "model case, two particles", model_case_two_particles()));
    verdicts.push((2, "adjoint gradient vs finite differences", adjoint_validation()));
    verdicts.push((3, "Wasserstein differentials", wasserstein_differentials()));

    let (report, elapsed) = run_study();
    print_study(&report);
    verdicts.push((4, "uniform support and Lipschitz bounds", uniform_bounds(&report, elapsed)));
    verdicts.push((5, "convergence of generated phase measures", distance_to_finest(&report)));
    verdicts.push((6, "control density independent of the costate", control_density(&report)));
    verdicts.push((7, "maximality of the limit Hamiltonian", maximality(&report)));
    verdicts.push((8, "replicator labels", replicator()));
    verdicts.push((9, "non-Lipschitz optimal control map", control_map_blow_up(&report)));

    verdicts.sort_by_key(|v| v.0);
    let mut failed = 0;
    for (id, name, v) in &verdicts {
        println!(
            "criterion {id} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
