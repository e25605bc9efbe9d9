//! The four CLI scenarios, usable as library calls.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ConfigError, RunConfig};
use super::export::{self, fmt_num};
use super::svg::{emit_svg, PhaseBand, PlotStyle, Series};
use crate::error::Error;
use crate::model::{Compartment, Control, Phase};
use crate::solver::{
    evaluate_cost, forward_pass, gradient_check_x0, grid_search_ts2, minimizer_shortfall, solve,
    ControlProfile, GridSearch, HybridTrajectory, PhaseControls, Solution, SolveStatus,
};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_NON_CONVERGED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Usage(_) => EXIT_CONFIG,
            CommandError::Solver(e) => match e {
                Error::InfeasibleSchedule(_)
                | Error::NoCrossing { .. }
                | Error::Transversality { .. } => EXIT_INFEASIBLE,
                Error::InvalidInput(_) => EXIT_CONFIG,
                _ => EXIT_FAILED_CHECK,
            },
            CommandError::Io { .. } => EXIT_FAILED_CHECK,
        }
    }
}

/// Exit status, a short human-readable report and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: String,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CommandError> {
        fs::create_dir_all(dir).map_err(|source| CommandError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), CommandError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CommandError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }
}

fn phase_style(traj: &HybridTrajectory, title: &str, y_label: &str) -> PlotStyle {
    PlotStyle {
        title: title.into(),
        y_label: y_label.into(),
        bands: traj
            .segments
            .iter()
            .map(|ps| PhaseBand {
                start: ps.segment.t_first(),
                end: ps.segment.t_last(),
                label: ps.phase.label().into(),
            })
            .collect(),
        markers: traj.switching_times.to_vec(),
        ..PlotStyle::default()
    }
}

/// One series per quantity, one piece per phase in which it exists.
fn phase_series<F>(traj: &HybridTrajectory, name: &str, value: F) -> Option<Series>
where
    F: Fn(Phase, usize) -> Option<f64>,
{
    let pieces: Vec<Vec<(f64, f64)>> = traj
        .segments
        .iter()
        .filter_map(|ps| {
            let pts: Vec<(f64, f64)> = (0..ps.segment.len())
                .filter_map(|k| value(ps.phase, k).map(|v| (ps.segment.times[k], v)))
                .collect();
            (!pts.is_empty()).then_some(pts)
        })
        .collect();
    (!pieces.is_empty()).then(|| Series {
        name: name.into(),
        pieces,
    })
}

fn states_svg(traj: &HybridTrajectory) -> crate::error::Result<String> {
    let series: Vec<Series> = Compartment::ALL
        .iter()
        .filter_map(|&c| {
            phase_series(traj, c.label(), |phase, k| {
                phase
                    .mode()
                    .index_of(c)
                    .map(|i| traj.segment(phase).states[k][i])
            })
        })
        .collect();
    emit_svg(&series, &phase_style(traj, "States", "population fraction"))
}

fn controls_svg(traj: &HybridTrajectory) -> crate::error::Result<String> {
    let series: Vec<Series> = Control::ALL
        .iter()
        .filter_map(|&c| {
            phase_series(traj, c.label(), |phase, k| {
                phase
                    .mode()
                    .control_index(c)
                    .map(|i| traj.segment(phase).controls[k][i])
            })
        })
        .collect();
    emit_svg(&series, &phase_style(traj, "Controls", "rate"))
}

fn cost_svg(
    model: &crate::model::EpiModel,
    traj: &HybridTrajectory,
) -> crate::error::Result<String> {
    let mut acc = 0.0;
    let mut pieces = Vec::new();
    for ps in &traj.segments {
        let seg = &ps.segment;
        let values = crate::solver::running_cost_samples(model, ps.phase, seg);
        let mut pts = Vec::with_capacity(seg.len());
        for k in 0..seg.len() {
            if k > 0 {
                acc += 0.5 * (values[k] + values[k - 1]) * (seg.times[k] - seg.times[k - 1]);
            }
            pts.push((seg.times[k], acc));
        }
        pieces.push(pts);
    }
    let series = [Series {
        name: "cumulative running cost".into(),
        pieces,
    }];
    emit_svg(&series, &phase_style(traj, "Incurred cost", "cost"))
}

fn write_trajectory_plots(
    w: &mut Writer,
    model: &crate::model::EpiModel,
    traj: &HybridTrajectory,
) -> Result<(), CommandError> {
    w.put("states.svg", &states_svg(traj)?)?;
    w.put("controls.svg", &controls_svg(traj)?)?;
    w.put("cost.svg", &cost_svg(model, traj)?)?;
    Ok(())
}

fn solve_exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => EXIT_CONVERGED,
        SolveStatus::NonConverged | SolveStatus::BoundaryOptimum => EXIT_NON_CONVERGED,
    }
}

/// Writes every artifact of a solved problem into `dir`.
pub fn write_solution(
    cfg: &RunConfig,
    sol: &Solution,
    dir: &Path,
) -> Result<Vec<PathBuf>, CommandError> {
    let mut w = Writer::new(dir)?;
    let traj = &sol.trajectory;
    w.put("summary.json", &export::solve_summary_json(sol))?;
    w.put("states.csv", &export::states_csv(traj))?;
    w.put("controls.csv", &export::controls_csv(traj))?;
    w.put("adjoints.csv", &export::adjoints_csv(traj, &sol.adjoint))?;
    w.put(
        "hamiltonian.csv",
        &export::hamiltonian_csv(traj, &sol.hamiltonian_trace),
    )?;
    w.put("cost.csv", &export::cost_csv(&cfg.model, traj, &sol.cost))?;
    w.put("iterations.csv", &export::iterations_csv(&sol.log))?;
    write_trajectory_plots(&mut w, &cfg.model, traj)?;
    let h = phase_series(traj, "H", |phase, k| {
        Some(sol.hamiltonian_trace[phase.ordinal()][k])
    })
    .expect("four phases");
    w.put(
        "hamiltonian.svg",
        &emit_svg(&[h], &phase_style(traj, "Hamiltonian", "H"))?,
    )?;
    Ok(w.files)
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome, CommandError> {
    let sol = solve(&cfg.model, &cfg.solver)?;
    let files = write_solution(cfg, &sol, out)?;
    let mut report = export::solve_report(&sol);
    for warning in &sol.log.warnings {
        report.push_str(&format!("warning: {warning}\n"));
    }
    Ok(Outcome {
        exit_code: solve_exit_code(sol.status),
        report,
        files,
    })
}

/// Parses `[phase.]control=value` (for example `u_j=0.04` or
/// `wfh.u_sigma_s=0.25`) into constant profiles, starting from zero.
/// Without a phase prefix the value applies to every phase having that
/// control.
pub fn parse_constant_controls(specs: &[String]) -> Result<PhaseControls, CommandError> {
    let mut values: Vec<Vec<f64>> = Phase::ALL
        .iter()
        .map(|p| vec![0.0; p.mode().control_dim()])
        .collect();
    for spec in specs {
        let bad = || {
            CommandError::Usage(format!(
                "control `{spec}` is not of the form [phase.]name=value"
            ))
        };
        let (lhs, rhs) = spec.split_once('=').ok_or_else(bad)?;
        let value: f64 = rhs.trim().parse().map_err(|_| bad())?;
        let (phase, name) = match lhs.trim().split_once('.') {
            Some((p, n)) => {
                let phase = Phase::ALL
                    .into_iter()
                    .find(|ph| ph.label() == p)
                    .ok_or_else(|| CommandError::Usage(format!("unknown phase `{p}`")))?;
                (Some(phase), n)
            }
            None => (None, lhs.trim()),
        };
        let control = Control::from_label(name)
            .ok_or_else(|| CommandError::Usage(format!("unknown control `{name}`")))?;
        let mut applied = false;
        for p in Phase::ALL {
            if phase.is_some_and(|q| q != p) {
                continue;
            }
            if let Some(i) = p.mode().control_index(control) {
                values[p.ordinal()][i] = value;
                applied = true;
            }
        }
        if !applied {
            return Err(CommandError::Usage(format!(
                "control `{name}` does not exist in that phase"
            )));
        }
    }
    let mut it = values.into_iter().map(ControlProfile::constant);
    Ok(PhaseControls {
        phases: std::array::from_fn(|_| it.next().expect("four phases")),
    })
}

/// Open-loop run: one forward pass with fixed controls and `t_s2`.
pub fn cmd_simulate(
    cfg: &RunConfig,
    controls: &PhaseControls,
    t_s2: f64,
    out: &Path,
) -> Result<Outcome, CommandError> {
    for p in Phase::ALL {
        let upper = cfg.model.bounds.upper(p);
        for v in &controls.get(p).values {
            if v.iter().zip(&upper).any(|(u, hi)| !(*u >= 0.0 && u <= hi)) {
                return Err(CommandError::Usage(format!(
                    "controls of phase {} must lie within [0, {:?}]",
                    p.label(),
                    upper
                )));
            }
        }
    }
    let traj = forward_pass(&cfg.model, controls, t_s2, &cfg.solver)?;
    let cost = evaluate_cost(&cfg.model, &traj);
    let mut w = Writer::new(out)?;
    w.put("summary.json", &export::simulate_summary_json(&traj, &cost))?;
    w.put("states.csv", &export::states_csv(&traj))?;
    w.put("controls.csv", &export::controls_csv(&traj))?;
    w.put("cost.csv", &export::cost_csv(&cfg.model, &traj, &cost))?;
    write_trajectory_plots(&mut w, &cfg.model, &traj)?;
    let t = traj.switching_times;
    let report = format!(
        "switching times   {} / {} / {}\ntotal cost        {}\nmax mass error    {}\n",
        fmt_num(t[0]),
        fmt_num(t[1]),
        fmt_num(t[2]),
        fmt_num(cost.total),
        fmt_num(traj.max_mass_error())
    );
    Ok(Outcome {
        exit_code: EXIT_CONVERGED,
        report,
        files: w.files,
    })
}

fn sweep_plots(grid: &GridSearch) -> crate::error::Result<(Option<String>, Option<String>)> {
    let cost: Vec<(f64, f64)> = grid
        .candidates
        .iter()
        .filter_map(|c| c.cost.map(|j| (c.t_s2, j)))
        .collect();
    let gap: Vec<(f64, f64)> = grid
        .candidates
        .iter()
        .filter_map(|c| c.gap.map(|g| (c.t_s2, g)))
        .collect();
    let base = PlotStyle {
        x_label: "t_s2 (days)".into(),
        ..PlotStyle::default()
    };
    let cost_svg = if cost.is_empty() {
        None
    } else {
        let style = PlotStyle {
            title: "Total cost against the protocol switching time".into(),
            y_label: "J".into(),
            stars: grid.best.into_iter().collect(),
            ..base.clone()
        };
        Some(emit_svg(&[Series::new("J", cost)], &style)?)
    };
    let gap_svg = if gap.is_empty() {
        None
    } else {
        let style = PlotStyle {
            title: "Hamiltonian gap at the protocol switching".into(),
            y_label: "H(t_s2-) - H(t_s2+)".into(),
            markers: grid.best.map(|b| b.0).into_iter().collect(),
            ..base
        };
        Some(emit_svg(&[Series::new("gap", gap)], &style)?)
    };
    Ok((cost_svg, gap_svg))
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    lo: f64,
    hi: f64,
    n: usize,
    out: &Path,
) -> Result<Outcome, CommandError> {
    if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(CommandError::Usage(format!(
            "sweep needs lo <= hi and n >= 1 (got [{lo}, {hi}], n = {n})"
        )));
    }
    let grid = grid_search_ts2(&cfg.model, &cfg.solver, lo, hi, n, None)?;
    let mut w = Writer::new(out)?;
    w.put("sweep.csv", &export::sweep_csv(&grid))?;
    let (cost_svg, gap_svg) = sweep_plots(&grid)?;
    if let Some(s) = cost_svg {
        w.put("sweep.svg", &s)?;
    }
    if let Some(s) = gap_svg {
        w.put("hgap.svg", &s)?;
    }
    let mut report = String::new();
    for c in &grid.candidates {
        report.push_str(&format!(
            "t_s2 = {:<10} J = {:<16} gap = {}\n",
            fmt_num(c.t_s2),
            c.cost.map(fmt_num).unwrap_or_else(|| "-".into()),
            c.gap
                .map(fmt_num)
                .unwrap_or_else(|| c.error.clone().unwrap_or_default())
        ));
    }
    if let Some((t, j)) = grid.best {
        report.push_str(&format!(
            "best t_s2 = {} (J = {})\n",
            fmt_num(t),
            fmt_num(j)
        ));
    }
    Ok(Outcome {
        exit_code: EXIT_CONVERGED,
        report,
        files: w.files,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckOptions {
    /// Test hook: negate the costates before the gradient check.
    pub flip_adjoint_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

pub const MASS_TOL: f64 = 1e-8;
pub const GRADIENT_DELTA: f64 = 1e-5;
pub const GRADIENT_RTOL: f64 = 1e-3;
pub const AUTONOMOUS_GAP_TOL: f64 = 1e-10;
/// Samples per phase and grid points per axis of the minimizer check.
pub const MINIMIZER_SAMPLES: usize = 100;
pub const MINIMIZER_GRID: usize = 101;

/// Runs the invariant suite on a solved problem.
pub fn run_checks(
    cfg: &RunConfig,
    sol: &Solution,
    opts: &CheckOptions,
) -> Result<CheckReport, Error> {
    let model = &cfg.model;
    let mut checks = Vec::new();

    let mass = sol.trajectory.max_mass_error();
    checks.push(CheckResult {
        name: "mass conservation".into(),
        passed: mass <= MASS_TOL,
        detail: format!("max |sum(x) - 1| = {}", fmt_num(mass)),
    });

    let mut adjoint = sol.adjoint.clone();
    if opts.flip_adjoint_sign {
        for v in adjoint.segments.iter_mut().flatten().flatten() {
            *v = -*v;
        }
    }
    for c in [Compartment::E, Compartment::I, Compartment::J] {
        let g = gradient_check_x0(
            model,
            &cfg.solver,
            &sol.controls,
            sol.t_s2,
            &adjoint,
            c,
            GRADIENT_DELTA,
        )?;
        let rel = g.relative_error();
        checks.push(CheckResult {
            name: format!("gradient {}", c.label()),
            passed: g.valid && rel <= GRADIENT_RTOL,
            detail: match &g.note {
                Some(note) => note.clone(),
                None => format!(
                    "adjoint {} vs finite difference {} (relative error {})",
                    fmt_num(g.adjoint),
                    fmt_num(g.finite_difference),
                    fmt_num(rel)
                ),
            },
        });
    }

    let mut worst: f64 = f64::NEG_INFINITY;
    for ps in &sol.trajectory.segments {
        let seg = &ps.segment;
        let lambdas = sol.adjoint.segment(ps.phase);
        let stride = (seg.len() / MINIMIZER_SAMPLES).max(1);
        for k in (0..seg.len()).step_by(stride).take(MINIMIZER_SAMPLES) {
            let x = &seg.states[k];
            let h_scale = 1.0 + lambdas[k].iter().map(|l| l.abs()).sum::<f64>();
            let short = minimizer_shortfall(model, ps.phase, x, &lambdas[k], MINIMIZER_GRID);
            worst = worst.max(short / h_scale);
        }
    }
    checks.push(CheckResult {
        name: "hamiltonian minimizer".into(),
        passed: worst <= 1e-12,
        detail: format!("largest scaled H(u*) - min grid H = {}", fmt_num(worst)),
    });

    let g = sol.switching.gaps;
    let gaps_ok = g[0].abs() <= AUTONOMOUS_GAP_TOL
        && g[2].abs() <= AUTONOMOUS_GAP_TOL
        && g[1].abs() <= cfg.solver.tol_hgap;
    checks.push(CheckResult {
        name: "hamiltonian gaps".into(),
        passed: gaps_ok,
        detail: format!(
            "gaps at t_s1, t_s2, t_s3 = {}, {}, {}",
            fmt_num(g[0]),
            fmt_num(g[1]),
            fmt_num(g[2])
        ),
    });

    Ok(CheckReport { checks })
}

pub fn cmd_check(
    cfg: &RunConfig,
    opts: &CheckOptions,
    out: &Path,
) -> Result<Outcome, CommandError> {
    let sol = solve(&cfg.model, &cfg.solver)?;
    let report = run_checks(cfg, &sol, opts)?;
    let mut w = Writer::new(out)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    w.put("check.json", &json)?;
    let mut text = String::new();
    for c in &report.checks {
        text.push_str(&format!(
            "[{}] {}: {}\n",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    Ok(Outcome {
        exit_code: if report.passed() {
            EXIT_CONVERGED
        } else {
            EXIT_FAILED_CHECK
        },
        report: text,
        files: w.files,
    })
}
