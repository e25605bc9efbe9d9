//! Deterministic CSV and JSON renderings of solver output.
//!
//! Column sets (one header row each, rows in ascending time):
//!
//! | file | columns |
//! |---|---|
//! | `states.csv` | `time,phase,H_v,H_s,V,S,E,I,J,R,mass` |
//! | `controls.csv` | `time,phase,u_j,u_sigma_v,u_sigma_s,u_v` |
//! | `adjoints.csv` | `time,phase,lambda_H_v,...,lambda_R` |
//! | `hamiltonian.csv` | `time,phase,H` |
//! | `cost.csv` | `time,phase,running_cost,cumulative_cost` |
//! | `iterations.csv` | `iteration,t_s2,cost,control_update,gap_1,gap_2,gap_3,p_1,p_3,inner_sweeps,alpha` |
//! | `sweep.csv` | `t_s2,cost,gap,converged,error` |
//!
//! A switching shows up as two rows with the same time: the last sample of
//! the phase before the jump and the first sample after it. Compartments
//! and controls that do not exist in a phase are empty cells.
//! `cumulative_cost` is a trapezoidal running integral for plotting; the
//! two closing rows of `cost.csv` (`terminal`, `total`) carry the exact
//! terminal cost and total cost.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{Compartment, Control, EpiModel, Phase, Switch};
use crate::solver::{
    running_cost_samples, AdjointTrajectory, CostBreakdown, GridSearch, HybridTrajectory,
    IterationLog, Solution, SolveStatus,
};

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest decimal that round-trips the 12-significant-digit rounding.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r == 0.0 {
        return "0".into();
    }
    if (1e-4..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn header(cells: &[&str]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn compartment_cells(phase: Phase, x: &[f64]) -> Vec<String> {
    let mode = phase.mode();
    Compartment::ALL
        .iter()
        .map(|&c| mode.index_of(c).map(|k| fmt_num(x[k])).unwrap_or_default())
        .collect()
}

pub fn states_csv(traj: &HybridTrajectory) -> String {
    let mut cols = vec!["time", "phase"];
    cols.extend(Compartment::ALL.iter().map(|c| c.label()));
    cols.push("mass");
    let mut out = header(&cols);
    for ps in &traj.segments {
        let seg = &ps.segment;
        for (t, x) in seg.times.iter().zip(&seg.states) {
            let mut cells = vec![fmt_num(*t), ps.phase.label().to_string()];
            cells.extend(compartment_cells(ps.phase, x));
            cells.push(fmt_num(x.iter().sum()));
            row(&mut out, &cells);
        }
    }
    out
}

pub fn controls_csv(traj: &HybridTrajectory) -> String {
    let mut cols = vec!["time", "phase"];
    cols.extend(Control::ALL.iter().map(|c| c.label()));
    let mut out = header(&cols);
    for ps in &traj.segments {
        let mode = ps.phase.mode();
        let seg = &ps.segment;
        for (t, u) in seg.times.iter().zip(&seg.controls) {
            let mut cells = vec![fmt_num(*t), ps.phase.label().to_string()];
            cells.extend(Control::ALL.iter().map(|&c| {
                mode.control_index(c)
                    .map(|k| fmt_num(u[k]))
                    .unwrap_or_default()
            }));
            row(&mut out, &cells);
        }
    }
    out
}

pub fn adjoints_csv(traj: &HybridTrajectory, adjoint: &AdjointTrajectory) -> String {
    let names: Vec<String> = Compartment::ALL
        .iter()
        .map(|c| format!("lambda_{}", c.label()))
        .collect();
    let mut cols = vec!["time", "phase"];
    cols.extend(names.iter().map(String::as_str));
    let mut out = header(&cols);
    for ps in &traj.segments {
        let lambdas = adjoint.segment(ps.phase);
        for (t, l) in ps.segment.times.iter().zip(lambdas) {
            let mut cells = vec![fmt_num(*t), ps.phase.label().to_string()];
            cells.extend(compartment_cells(ps.phase, l));
            row(&mut out, &cells);
        }
    }
    out
}

pub fn hamiltonian_csv(traj: &HybridTrajectory, trace: &[Vec<f64>]) -> String {
    let mut out = header(&["time", "phase", "H"]);
    for (ps, values) in traj.segments.iter().zip(trace) {
        for (t, h) in ps.segment.times.iter().zip(values) {
            row(
                &mut out,
                &[fmt_num(*t), ps.phase.label().to_string(), fmt_num(*h)],
            );
        }
    }
    out
}

pub fn cost_csv(model: &EpiModel, traj: &HybridTrajectory, cost: &CostBreakdown) -> String {
    let mut out = header(&["time", "phase", "running_cost", "cumulative_cost"]);
    let mut acc = 0.0;
    for ps in &traj.segments {
        let seg = &ps.segment;
        let values = running_cost_samples(model, ps.phase, seg);
        for k in 0..seg.len() {
            if k > 0 {
                acc += 0.5 * (values[k] + values[k - 1]) * (seg.times[k] - seg.times[k - 1]);
            }
            row(
                &mut out,
                &[
                    fmt_num(seg.times[k]),
                    ps.phase.label().to_string(),
                    fmt_num(values[k]),
                    fmt_num(acc),
                ],
            );
        }
    }
    let tf = fmt_num(model.horizon.tf);
    row(
        &mut out,
        &[
            tf.clone(),
            "terminal".into(),
            String::new(),
            fmt_num(cost.terminal),
        ],
    );
    row(
        &mut out,
        &[tf, "total".into(), String::new(), fmt_num(cost.total)],
    );
    out
}

pub fn iterations_csv(log: &IterationLog) -> String {
    let mut out = header(&[
        "iteration",
        "t_s2",
        "cost",
        "control_update",
        "gap_1",
        "gap_2",
        "gap_3",
        "p_1",
        "p_3",
        "inner_sweeps",
        "alpha",
    ]);
    for r in &log.entries {
        row(
            &mut out,
            &[
                r.iteration.to_string(),
                fmt_num(r.t_s2),
                fmt_num(r.cost),
                fmt_num(r.control_update),
                fmt_num(r.gaps[0]),
                fmt_num(r.gaps[1]),
                fmt_num(r.gaps[2]),
                fmt_num(r.p1),
                fmt_num(r.p3),
                r.inner_sweeps.to_string(),
                fmt_num(r.alpha),
            ],
        );
    }
    out
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn sweep_csv(grid: &GridSearch) -> String {
    let mut out = header(&["t_s2", "cost", "gap", "converged", "error"]);
    for c in &grid.candidates {
        row(
            &mut out,
            &[
                fmt_num(c.t_s2),
                c.cost.map(fmt_num).unwrap_or_default(),
                c.gap.map(fmt_num).unwrap_or_default(),
                c.converged.to_string(),
                c.error.as_deref().map(quote).unwrap_or_default(),
            ],
        );
    }
    out
}

fn named_state(phase: Phase, x: &[f64]) -> BTreeMap<&'static str, f64> {
    phase
        .mode()
        .layout()
        .iter()
        .zip(x)
        .map(|(c, v)| (c.label(), round_sig(*v)))
        .collect()
}

#[derive(Debug, Serialize)]
struct SwitchEntry {
    transition: &'static str,
    time: f64,
    state_before: BTreeMap<&'static str, f64>,
    state_after: BTreeMap<&'static str, f64>,
    multiplier: f64,
    hamiltonian_gap: f64,
}

#[derive(Debug, Serialize)]
struct CostEntry {
    running: BTreeMap<&'static str, f64>,
    terminal: f64,
    total: f64,
}

impl From<&CostBreakdown> for CostEntry {
    fn from(c: &CostBreakdown) -> Self {
        Self {
            running: Phase::ALL
                .iter()
                .map(|p| (p.label(), round_sig(c.running[p.ordinal()])))
                .collect(),
            terminal: round_sig(c.terminal),
            total: round_sig(c.total),
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    status: SolveStatus,
    converged: bool,
    inner_converged: bool,
    switching_times: [f64; 3],
    switchings: Vec<SwitchEntry>,
    terminal_state: BTreeMap<&'static str, f64>,
    cost: CostEntry,
    outer_iterations: usize,
    update_sign: f64,
    max_mass_error: f64,
    warnings: &'a [String],
}

fn switch_entries(
    traj: &HybridTrajectory,
    multipliers: Option<[f64; 3]>,
    gaps: Option<[f64; 3]>,
) -> Vec<SwitchEntry> {
    Switch::ALL
        .iter()
        .map(|&sw| {
            let k = sw.ordinal();
            let after = traj.segment(sw.after());
            SwitchEntry {
                transition: sw.label(),
                time: round_sig(traj.switching_times[k]),
                state_before: named_state(sw.before(), &traj.switching_states_pre[k]),
                state_after: named_state(sw.after(), &after.states[0]),
                multiplier: multipliers.map(|m| round_sig(m[k])).unwrap_or(0.0),
                hamiltonian_gap: gaps.map(|g| round_sig(g[k])).unwrap_or(0.0),
            }
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

pub fn solve_summary_json(sol: &Solution) -> String {
    let traj = &sol.trajectory;
    to_json(&SolveSummary {
        status: sol.status,
        converged: sol.status == SolveStatus::Converged,
        inner_converged: sol.inner_converged,
        switching_times: traj.switching_times.map(round_sig),
        switchings: switch_entries(
            traj,
            Some(sol.switching.multipliers),
            Some(sol.switching.gaps),
        ),
        terminal_state: named_state(Phase::RtoFinal, traj.terminal_state()),
        cost: CostEntry::from(&sol.cost),
        outer_iterations: sol.log.entries.len(),
        update_sign: sol.update_sign,
        max_mass_error: round_sig(traj.max_mass_error()),
        warnings: &sol.log.warnings,
    })
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    switching_times: [f64; 3],
    switchings: Vec<SwitchEntry>,
    terminal_state: BTreeMap<&'static str, f64>,
    cost: CostEntry,
    max_mass_error: f64,
}

pub fn simulate_summary_json(traj: &HybridTrajectory, cost: &CostBreakdown) -> String {
    to_json(&SimulateSummary {
        switching_times: traj.switching_times.map(round_sig),
        switchings: switch_entries(traj, None, None),
        terminal_state: named_state(Phase::RtoFinal, traj.terminal_state()),
        cost: CostEntry::from(cost),
        max_mass_error: round_sig(traj.max_mass_error()),
    })
}

/// Human-readable one-screen report of a solve.
pub fn solve_report(sol: &Solution) -> String {
    let mut s = String::new();
    let t = sol.trajectory.switching_times;
    let _ = writeln!(s, "status            {:?}", sol.status);
    let _ = writeln!(
        s,
        "switching times   {} / {} / {}",
        fmt_num(t[0]),
        fmt_num(t[1]),
        fmt_num(t[2])
    );
    let g = sol.switching.gaps;
    let _ = writeln!(
        s,
        "hamiltonian gaps  {} / {} / {}",
        fmt_num(g[0]),
        fmt_num(g[1]),
        fmt_num(g[2])
    );
    let _ = writeln!(s, "total cost        {}", fmt_num(sol.cost.total));
    let _ = writeln!(s, "outer iterations  {}", sol.log.entries.len());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1816.2020465824037), "1816.20204658");
        assert_eq!(fmt_num(1.23456789012345e-7), "1.23456789012e-7");
        assert_eq!(fmt_num(40.0), "40");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn rounding_round_trips() {
        for x in [1.0 / 3.0, 2.0f64.sqrt(), 1e-9 / 7.0, 123456.789012345] {
            let s = fmt_num(x);
            assert_eq!(fmt_num(s.parse().unwrap()), s);
        }
    }
}
