//! The `run` command.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use mfpmp::meanfield::{convergence_study, StudyRow};
use mfpmp::pmp::{self, CostateBundle};
use mfpmp::problems::{Problem, ProblemSpec};
use mfpmp::simulate::{self, integrate_replicator};
use mfpmp::{ControlGrid, TimeGrid, TrajectoryBundle};

use crate::config::{self, ExperimentConfig, Solver};
use crate::output::{self, IterationRow, LabelRow, Table, TrajectoryRow};
use crate::CliError;

/// Where a run wrote its artifacts and whether it completed.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub rows: Vec<StudyRow>,
}

/// Per-solve record in the manifest.
#[derive(Clone, Debug, Serialize)]
struct SolveRecord {
    solver: Solver,
    n: usize,
    iterations: usize,
    converged: bool,
    cost: f64,
    seconds: f64,
}

struct Solved {
    controls: ControlGrid,
    trajectory: TrajectoryBundle,
    costate: CostateBundle,
    iterations: usize,
    converged: bool,
    history: Vec<IterationRow>,
}

fn solve(p: &ProblemSpec, solver: Solver, x0: &[f64], grid: &TimeGrid, config: &ExperimentConfig) -> mfpmp::Result<Solved> {
    let n = x0.len() / p.dim;
    match solver {
        Solver::Sweep => {
            let out = pmp::forward_backward_sweep(p, x0, grid, &config.solver.sweep())?;
            let r = &out.report;
            let history = (0..r.costs.len())
                .map(|it| IterationRow {
                    solver: solver.name().into(),
                    n,
                    iteration: it,
                    cost: r.costs[it],
                    residual: r.residuals.get(it).copied(),
                    update_norm: r.update_norms.get(it).copied(),
                })
                .collect();
            Ok(Solved {
                iterations: r.iterations,
                converged: r.converged,
                history,
                controls: out.controls,
                trajectory: out.trajectory,
                costate: out.costate,
            })
        }
        Solver::Direct => {
            let start = ControlGrid::zeros(n, p.dim, grid.steps());
            let out = pmp::direct_optimize(p, x0, grid, &start, &config.solver.direct())?;
            let trajectory = simulate::integrate_forward(p, &out.controls, x0, grid)?;
            let costate = pmp::integrate_costate_backward(p, &trajectory, &out.controls)?;
            let history = out
                .history
                .iter()
                .enumerate()
                .map(|(it, &cost)| IterationRow {
                    solver: solver.name().into(),
                    n,
                    iteration: it,
                    cost,
                    residual: None,
                    update_norm: None,
                })
                .collect();
            Ok(Solved {
                iterations: out.iterations,
                converged: out.stop == pmp::StopReason::Stationary,
                history,
                controls: out.controls,
                trajectory,
                costate,
            })
        }
    }
}

fn trajectory_rows(solver: Solver, s: &Solved) -> impl Iterator<Item = TrajectoryRow> + '_ {
    let grid = *s.trajectory.grid();
    let (n, d) = (s.trajectory.particles(), s.trajectory.dim());
    (0..grid.nodes()).flat_map(move |k| {
        (0..n).flat_map(move |i| {
            (0..d).map(move |a| TrajectoryRow {
                solver: solver.name().into(),
                n,
                k,
                t: grid.time(k),
                i,
                axis: a,
                x: s.trajectory.at(k, i)[a],
                r: s.costate.at(k, i)[a],
                u: (k < grid.steps()).then(|| s.controls.at(k, i)[a]),
            })
        })
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs the experiment described by `config_path`. Output goes to
/// `output_override`, else the configured directory, else `out/<stem>`.
///
/// A solver failure still writes the manifest (with `status = "failed"`) and
/// whatever tables were complete, then returns [`CliError::Solver`].
pub fn run(config_path: &Path, output_override: Option<&Path>) -> Result<RunSummary, CliError> {
    let total = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let config = config::load(config_path)?;
    let dir = match (output_override, &config.output.dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => d.clone(),
        (None, None) => {
            let stem = config_path.file_stem().map(|s| s.to_string_lossy().into_owned());
            PathBuf::from("out").join(stem.unwrap_or_else(|| "run".into()))
        }
    };
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    info!("writing artifacts to {}", dir.display());

    let problem = config.build_problem()?;
    let spec = problem.spec();
    let grid = TimeGrid::for_problem(spec, config.particles.steps).map_err(|e| CliError::Schema {
        path: "particles.steps".into(),
        message: e.to_string(),
    })?;

    let mut files = Vec::new();
    let mut failure: Option<String> = None;
    let mut records = Vec::new();

    let solve_clock = Instant::now();
    let mut trajectories = Table::create(&dir, output::TRAJECTORIES)?;
    let mut sweeps = Table::create(&dir, output::SWEEP)?;
    let mut labels = match &problem {
        Problem::Replicator(_) => Some(Table::create(&dir, output::LABELS)?),
        Problem::Particle(_) => None,
    };
    'sizes: for n in config.sizes() {
        let x0 = spec.sample_initial(n, config.seed);
        for &solver in config.solver.method.solvers() {
            let clock = Instant::now();
            let solved = match solve(spec, solver, &x0, &grid, &config) {
                Ok(s) => s,
                Err(e) => {
                    warn!("{} failed at N = {n}: {e}", solver.name());
                    failure = Some(format!("{} at N = {n}: {e}", solver.name()));
                    break 'sizes;
                }
            };
            for row in trajectory_rows(solver, &solved) {
                trajectories.write(&row)?;
            }
            for row in &solved.history {
                sweeps.write(row)?;
            }
            if let (Problem::Replicator(rp), Some(table)) = (&problem, labels.as_mut()) {
                let l0 = rp.sample_labels(n, config.seed);
                match integrate_replicator(rp, &solved.controls, &x0, &l0, &grid) {
                    Ok(run) => {
                        for k in 0..grid.nodes() {
                            for i in 0..n {
                                for (label, &value) in run.at(k, i).iter().enumerate() {
                                    table.write(&LabelRow {
                                        solver: solver.name().into(),
                                        n,
                                        k,
                                        t: grid.time(k),
                                        i,
                                        label,
                                        value,
                                    })?;
                                }
                            }
                        }
                    }
                    Err(e) => {
                        failure = Some(format!("labels under {} at N = {n}: {e}", solver.name()));
                        break 'sizes;
                    }
                }
            }
            let cost = simulate::cost_discrete(spec, &solved.trajectory, &solved.controls);
            info!(
                "{} N = {n}: cost {cost}, {} iterations, converged = {}",
                solver.name(),
                solved.iterations,
                solved.converged
            );
            records.push(SolveRecord {
                solver,
                n,
                iterations: solved.iterations,
                converged: solved.converged,
                cost,
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }
    trajectories.finish()?;
    sweeps.finish()?;
    files.extend([output::TRAJECTORIES, output::SWEEP]);
    if let Some(table) = labels {
        table.finish()?;
        files.push(output::LABELS);
    }
    let solve_seconds = solve_clock.elapsed().as_secs_f64();

    let study_clock = Instant::now();
    let mut rows = Vec::new();
    if failure.is_none() && config.diagnostics.study {
        match convergence_study(spec, &config.sizes(), &grid, &config.study_options()) {
            Ok(report) => {
                let mut table = Table::create(&dir, output::REPORT)?;
                for row in &report.rows {
                    table.write(row)?;
                }
                table.finish()?;
                files.push(output::REPORT);
                if let Some(bad) = report.rows.iter().find(|r| r.status == "failed") {
                    failure = Some(format!("study run at N = {} failed", bad.n));
                }
                rows = report.rows;
            }
            Err(e) => failure = Some(format!("convergence study: {e}")),
        }
    }
    let study_seconds = study_clock.elapsed().as_secs_f64();

    files.push(output::MANIFEST);
    let manifest = json!({
        "tool": { "name": "mfpmp", "version": env!("CARGO_PKG_VERSION"), "core_version": mfpmp::VERSION },
        "schema_version": config::SCHEMA_VERSION,
        "config_path": config_path.display().to_string(),
        "config": &config,
        "parallel": cfg!(feature = "parallel"),
        "threads": threads(),
        "started_unix": started_unix,
        "wall_seconds": { "solve": solve_seconds, "study": study_seconds, "total": total.elapsed().as_secs_f64() },
        "status": if failure.is_some() { "failed" } else { "ok" },
        "failure": &failure,
        "solves": &records,
        "files": &files,
    });
    let path = dir.join(output::MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is plain data");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;

    match failure {
        Some(message) => Err(CliError::Solver { message, dir }),
        None => Ok(RunSummary {
            output_dir: dir,
            files: files.into_iter().map(String::from).collect(),
            rows,
        }),
    }
}
