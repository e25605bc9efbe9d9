use rayon::prelude::*;
use serde::Serialize;

use super::{
    evaluate_cost, evaluate_schedule, first_switching_time, forward_pass, hamiltonian_gaps,
    hamiltonian_trace, update_controls, AdjointTrajectory, CostBreakdown, Evaluation,
    HybridTrajectory, PhaseControls, SolverConfig,
};
use crate::error::{Error, Result};
use crate::model::{hamiltonian, minimize_control, Compartment, EpiModel, Mode, Phase};

/// Result of the inner forward–backward sweep at a fixed `t_s2`.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub t_s2: f64,
    pub controls: PhaseControls,
    pub trajectory: HybridTrajectory,
    pub adjoint: AdjointTrajectory,
    pub cost: CostBreakdown,
    pub sweeps: usize,
    pub converged: bool,
    pub update_norm: f64,
    pub alpha: f64,
    pub alpha_halvings: usize,
}

impl InnerSolution {
    pub fn gaps(&self, model: &EpiModel) -> [f64; 3] {
        hamiltonian_gaps(model, &self.trajectory, &self.adjoint)
    }
}

const MIN_ALPHA: f64 = 1e-6;

/// Evaluates `init`, falling back to the upper-bound controls when `init`
/// leaves the schedule infeasible (with no control the epidemic never
/// falls back below `I_low` inside the horizon).
fn feasible_start(
    model: &EpiModel,
    cfg: &SolverConfig,
    t_s2: f64,
    init: PhaseControls,
) -> Result<(PhaseControls, Evaluation)> {
    match evaluate_schedule(model, &init, t_s2, cfg) {
        Ok(ev) => Ok((init, ev)),
        Err(first) => {
            let upper = PhaseControls::upper(&model.bounds);
            match evaluate_schedule(model, &upper, t_s2, cfg) {
                Ok(ev) => Ok((upper, ev)),
                Err(_) => Err(first),
            }
        }
    }
}

/// Starting control profiles and switching time for [`solve`]: zero
/// controls when they give a feasible schedule at `t_s1 + offset`,
/// otherwise the upper bounds.
pub fn initial_guess(model: &EpiModel, cfg: &SolverConfig) -> Result<(PhaseControls, f64)> {
    let upper_t = cfg.ts2_max.min(model.horizon.tf - cfg.ts2_margin);
    let mut first_err = None;
    for controls in [PhaseControls::zeros(), PhaseControls::upper(&model.bounds)] {
        let t_s1 = match first_switching_time(model, &controls, cfg) {
            Ok(t) => t,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let t_s2 = (t_s1 + cfg.ts2_init_offset).min(upper_t);
        match forward_pass(model, &controls, t_s2, cfg) {
            Ok(_) => return Ok((controls, t_s2)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("two candidates tried"))
}

/// Forward–backward sweep on the continuous controls with `t_s2` frozen.
///
/// A sweep that raises the cost is discarded and the relaxation halved.
pub fn optimize_controls(
    model: &EpiModel,
    cfg: &SolverConfig,
    t_s2: f64,
    init: PhaseControls,
) -> Result<InnerSolution> {
    let mut alpha = cfg.alpha;
    let mut halvings = 0;
    let (mut controls, mut accepted) = feasible_start(model, cfg, t_s2, init)?;
    let mut accepted_controls = controls.clone();
    let mut update_norm = f64::INFINITY;

    for sweep in 1..=cfg.max_inner_iters {
        let (next, norm) = update_controls(model, &accepted.trajectory, &accepted.adjoint, alpha);
        update_norm = norm;
        if norm <= cfg.tol_control {
            return Ok(InnerSolution {
                t_s2,
                controls: accepted_controls,
                trajectory: accepted.trajectory,
                adjoint: accepted.adjoint,
                cost: accepted.cost,
                sweeps: sweep,
                converged: true,
                update_norm: norm,
                alpha,
                alpha_halvings: halvings,
            });
        }
        controls = next;
        let candidate = evaluate_schedule(model, &controls, t_s2, cfg);
        let slack = 1e-9 * accepted.cost.total.abs().max(1.0);
        match candidate {
            Ok(ev) if ev.cost.total <= accepted.cost.total + slack => {
                accepted = ev;
                accepted_controls = controls.clone();
            }
            _ => {
                alpha *= 0.5;
                halvings += 1;
                if alpha < MIN_ALPHA {
                    break;
                }
            }
        }
    }

    Ok(InnerSolution {
        t_s2,
        controls: accepted_controls,
        trajectory: accepted.trajectory,
        adjoint: accepted.adjoint,
        cost: accepted.cost,
        sweeps: cfg.max_inner_iters,
        converged: false,
        update_norm,
        alpha,
        alpha_halvings: halvings,
    })
}

/// Outcome of one switching-time update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ts2Step {
    Move(f64),
    /// The gap pushes `t_s2` against a bound it already sits on.
    Boundary(f64),
    /// Bracket collapsed without the gap vanishing.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bracket {
    lo: (f64, f64),
    hi: (f64, f64),
    /// Side replaced on the previous update (-1 lo, +1 hi).
    last_side: i8,
}

impl Bracket {
    fn secant(&self) -> f64 {
        let ((a, ga), (b, gb)) = (self.lo, self.hi);
        let c = a - ga * (b - a) / (gb - ga);
        if c > a && c < b {
            c
        } else {
            0.5 * (a + b)
        }
    }
}

/// Damped update of the controlled switching time driven by the Hamiltonian
/// gap at `t_s2`, switching to Illinois-style regula falsi once two gaps of
/// opposite sign bracket the root.
#[derive(Debug, Clone)]
pub struct Ts2Search {
    pub eta: f64,
    pub max_move: f64,
    /// `+1` when a positive gap means the cost grows with `t_s2`.
    pub sign: f64,
    last: Option<(f64, f64)>,
    bracket: Option<Bracket>,
}

impl Ts2Search {
    pub fn new(eta: f64, max_move: f64, sign: f64) -> Self {
        Self {
            eta,
            max_move,
            sign,
            last: None,
            bracket: None,
        }
    }

    pub fn bracketed(&self) -> bool {
        self.bracket.is_some()
    }

    pub fn update(&mut self, t: f64, gap: f64, lower: f64, upper: f64) -> Ts2Step {
        if gap == 0.0 {
            return Ts2Step::Move(t);
        }
        if let Some(mut br) = self.bracket {
            if gap.signum() == br.lo.1.signum() {
                if br.last_side == -1 {
                    br.hi.1 *= 0.5;
                }
                br.lo = (t, gap);
                br.last_side = -1;
            } else {
                if br.last_side == 1 {
                    br.lo.1 *= 0.5;
                }
                br.hi = (t, gap);
                br.last_side = 1;
            }
            self.bracket = Some(br);
            if br.hi.0 - br.lo.0 <= 1e-10 * (1.0 + t.abs()) {
                return Ts2Step::Stalled;
            }
            return Ts2Step::Move(br.secant());
        }
        if let Some((tp, gp)) = self.last {
            if gp.signum() != gap.signum() && tp != t {
                self.eta *= 0.5;
                let (lo, hi) = if tp < t {
                    ((tp, gp), (t, gap))
                } else {
                    ((t, gap), (tp, gp))
                };
                let br = Bracket {
                    lo,
                    hi,
                    last_side: 0,
                };
                self.bracket = Some(br);
                return Ts2Step::Move(br.secant());
            }
        }
        self.last = Some((t, gap));
        let step = (-self.eta * self.sign * gap).clamp(-self.max_move, self.max_move);
        let next = (t + step).clamp(lower, upper);
        if (next - t).abs() <= 1e-12 {
            return Ts2Step::Boundary(t);
        }
        Ts2Step::Move(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NonConverged,
    BoundaryOptimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub t_s2: f64,
    pub cost: f64,
    pub control_update: f64,
    pub gaps: [f64; 3],
    pub p1: f64,
    pub p3: f64,
    pub inner_sweeps: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationLog {
    pub entries: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingReport {
    pub times: [f64; 3],
    pub states_pre: [Vec<f64>; 3],
    pub multipliers: [f64; 3],
    pub gaps: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub inner_converged: bool,
    pub t_s2: f64,
    pub controls: PhaseControls,
    pub trajectory: HybridTrajectory,
    pub adjoint: AdjointTrajectory,
    pub cost: CostBreakdown,
    pub hamiltonian_trace: Vec<Vec<f64>>,
    pub switching: SwitchingReport,
    pub update_sign: f64,
    pub log: IterationLog,
}

impl Solution {
    fn from_inner(
        model: &EpiModel,
        inner: InnerSolution,
        status: SolveStatus,
        sign: f64,
        log: IterationLog,
    ) -> Self {
        let gaps = inner.gaps(model);
        let trace = hamiltonian_trace(model, &inner.trajectory, &inner.adjoint);
        let switching = SwitchingReport {
            times: inner.trajectory.switching_times,
            states_pre: inner.trajectory.switching_states_pre.clone(),
            multipliers: inner.adjoint.multipliers,
            gaps,
        };
        Self {
            status,
            inner_converged: inner.converged,
            t_s2: inner.t_s2,
            controls: inner.controls,
            trajectory: inner.trajectory,
            adjoint: inner.adjoint,
            cost: inner.cost,
            hamiltonian_trace: trace,
            switching,
            update_sign: sign,
            log,
        }
    }
}

fn frozen_cost(
    model: &EpiModel,
    cfg: &SolverConfig,
    controls: &PhaseControls,
    t_s2: f64,
) -> Result<f64> {
    let traj = forward_pass(model, controls, t_s2, cfg)?;
    Ok(evaluate_cost(model, &traj).total)
}

/// Solves the hybrid optimal control problem: continuous controls by the
/// forward–backward sweep, the controlled switching time by driving the
/// Hamiltonian gap at `t_s2` to zero.
pub fn solve(model: &EpiModel, cfg: &SolverConfig) -> Result<Solution> {
    solve_from(model, cfg, None)
}

/// [`solve`] with an explicit starting switching time.
pub fn solve_from(
    model: &EpiModel,
    cfg: &SolverConfig,
    t_s2_start: Option<f64>,
) -> Result<Solution> {
    let mut issues = model.validate();
    issues.extend(cfg.validate());
    if !issues.is_empty() {
        return Err(Error::InvalidInput(issues.join("; ")));
    }

    let upper = cfg.ts2_max.min(model.horizon.tf - cfg.ts2_margin);
    let (init, mut t_s2) = initial_guess(model, cfg)?;
    if let Some(t) = t_s2_start {
        t_s2 = t;
    }
    let mut inner = optimize_controls(model, cfg, t_s2, init)?;

    // Sign of the update: compare the cost slope in t_s2 with the gap.
    let gap0 = inner.gaps(model)[1];
    let d = cfg.calibration_delta;
    let slope = match (
        frozen_cost(model, cfg, &inner.controls, t_s2 + d),
        frozen_cost(model, cfg, &inner.controls, t_s2 - d),
    ) {
        (Ok(up), Ok(down)) => (up - down) / (2.0 * d),
        _ => gap0,
    };
    let sign = if slope * gap0 < 0.0 { -1.0 } else { 1.0 };

    let mut search = Ts2Search::new(cfg.ts2_step, cfg.ts2_max_move, sign);
    let mut log = IterationLog::default();
    let mut status = SolveStatus::NonConverged;

    for iteration in 0..cfg.max_outer_iters {
        let gaps = inner.gaps(model);
        log.entries.push(IterationRecord {
            iteration,
            t_s2,
            cost: inner.cost.total,
            control_update: inner.update_norm,
            gaps,
            p1: inner.adjoint.multipliers[0],
            p3: inner.adjoint.multipliers[2],
            inner_sweeps: inner.sweeps,
            alpha: inner.alpha,
        });
        if !inner.converged {
            log.warnings.push(format!(
                "inner sweep did not converge at t_s2 = {t_s2} (update {:.3e})",
                inner.update_norm
            ));
        }
        if inner.converged && gaps[1].abs() <= cfg.tol_hgap {
            status = SolveStatus::Converged;
            break;
        }
        let lower = inner.trajectory.switching_times[0] + cfg.ts2_margin;
        let target = match search.update(t_s2, gaps[1], lower, upper) {
            Ts2Step::Move(next) => next,
            Ts2Step::Boundary(at) => {
                log.warnings
                    .push(format!("BoundaryOptimum: t_s2 held at bound {at}"));
                status = SolveStatus::BoundaryOptimum;
                break;
            }
            Ts2Step::Stalled => {
                log.warnings
                    .push("switching-time bracket collapsed".to_string());
                break;
            }
        };
        // Shorten moves that leave the feasible schedule.
        let mut step = target - t_s2;
        let mut moved = None;
        for _ in 0..20 {
            match optimize_controls(model, cfg, t_s2 + step, inner.controls.clone()) {
                Ok(next) => {
                    moved = Some(next);
                    break;
                }
                Err(Error::InfeasibleSchedule(_)) | Err(Error::NoCrossing { .. }) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match moved {
            Some(next) => {
                t_s2 = next.t_s2;
                inner = next;
            }
            None => {
                log.warnings
                    .push(format!("no feasible move away from t_s2 = {t_s2}"));
                break;
            }
        }
    }

    Ok(Solution::from_inner(model, inner, status, sign, log))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCandidate {
    pub t_s2: f64,
    pub cost: Option<f64>,
    pub gap: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearch {
    pub candidates: Vec<GridCandidate>,
    /// `(t_s2, J)` of the cheapest feasible candidate; only reported for
    /// three or more candidates.
    pub best: Option<(f64, f64)>,
}

pub fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Brute-force oracle for the controlled switching time: converges the
/// inner sweep at every grid point of `[lo, hi]` (in parallel) and records
/// the cost and the Hamiltonian gap at `t_s2`.
pub fn grid_search_ts2(
    model: &EpiModel,
    cfg: &SolverConfig,
    lo: f64,
    hi: f64,
    n: usize,
    warm_start: Option<&PhaseControls>,
) -> Result<GridSearch> {
    if n == 0 || !(lo <= hi) {
        return Err(Error::InvalidInput(format!(
            "grid search needs n >= 1 and lo <= hi (got n = {n}, [{lo}, {hi}])"
        )));
    }
    let candidates: Vec<GridCandidate> = grid_points(lo, hi, n)
        .into_par_iter()
        .map(|t| {
            let init = warm_start.cloned().unwrap_or_else(PhaseControls::zeros);
            match optimize_controls(model, cfg, t, init) {
                Ok(inner) => GridCandidate {
                    t_s2: t,
                    cost: Some(inner.cost.total),
                    gap: Some(inner.gaps(model)[1]),
                    converged: inner.converged,
                    error: None,
                },
                Err(e) => GridCandidate {
                    t_s2: t,
                    cost: None,
                    gap: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best = if n >= 3 {
        candidates
            .iter()
            .filter_map(|c| c.cost.map(|j| (c.t_s2, j)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    } else {
        None
    };
    Ok(GridSearch { candidates, best })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub component: Compartment,
    /// `lambda_c(t0) - lambda_R(t0)`.
    pub adjoint: f64,
    pub finite_difference: f64,
    pub valid: bool,
    pub note: Option<String>,
}

impl GradientCheck {
    pub fn relative_error(&self) -> f64 {
        let scale = self.adjoint.abs().max(self.finite_difference.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.adjoint - self.finite_difference).abs() / scale
        }
    }
}

/// Compares the initial costate with a central finite difference of the
/// cost along `x0 + delta (e_c - e_R)`, controls and `t_s2` frozen.
pub fn gradient_check_x0(
    model: &EpiModel,
    cfg: &SolverConfig,
    controls: &PhaseControls,
    t_s2: f64,
    adjoint: &AdjointTrajectory,
    component: Compartment,
    delta: f64,
) -> Result<GradientCheck> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be positive (got {delta})"
        )));
    }
    let c = Mode::Rto.index_of(component).ok_or_else(|| {
        Error::InvalidInput(format!("{} is not an RTO compartment", component.label()))
    })?;
    let r = crate::model::rto::R;
    let lambda0 = adjoint.initial();
    let adjoint_value = lambda0[c] - lambda0[r];

    let perturbed = |sign: f64| {
        let mut m = model.clone();
        m.x0[c] += sign * delta;
        m.x0[r] -= sign * delta;
        forward_pass(&m, controls, t_s2, cfg).map(|traj| evaluate_cost(&m, &traj).total)
    };
    let (plus, minus) = (perturbed(1.0), perturbed(-1.0));
    match (plus, minus) {
        (Ok(jp), Ok(jm)) => Ok(GradientCheck {
            component,
            adjoint: adjoint_value,
            finite_difference: (jp - jm) / (2.0 * delta),
            valid: true,
            note: None,
        }),
        (Err(e), _) | (_, Err(e)) => Ok(GradientCheck {
            component,
            adjoint: adjoint_value,
            finite_difference: f64::NAN,
            valid: false,
            note: Some(format!(
                "perturbed run changed the switching structure: {e}"
            )),
        }),
    }
}

/// How far the closed-form minimizer falls short of a brute-force grid:
/// `H(u*) - min H(u)` over a tensor grid with `n` points per axis (capped at
/// 11 per axis for multi-dimensional controls) plus an `n`-point sweep of
/// every axis with the other components held at `u*`. Non-positive means
/// the minimizer is at least as good as every grid point.
pub fn minimizer_shortfall(
    model: &EpiModel,
    phase: Phase,
    x: &[f64],
    lambda: &[f64],
    n: usize,
) -> f64 {
    let n = n.max(2);
    let upper = model.bounds.upper(phase);
    let h = |u: &[f64]| hamiltonian(phase, x, lambda, u, &model.params, &model.weights);
    let star = minimize_control(phase, x, lambda, &model.weights, &model.bounds);
    let h_star = h(&star);
    let mut best = f64::INFINITY;
    let axis = |k: usize, m: usize, i: usize| upper[k] * i as f64 / (m - 1) as f64;
    for k in 0..upper.len() {
        let mut u = star.clone();
        for i in 0..n {
            u[k] = axis(k, n, i);
            best = best.min(h(&u));
        }
    }
    let m = if upper.len() == 1 { n } else { n.min(11) };
    let total = m.pow(upper.len() as u32);
    let mut u = vec![0.0; upper.len()];
    for idx in 0..total {
        let mut rest = idx;
        for (k, slot) in u.iter_mut().enumerate() {
            *slot = axis(k, m, rest % m);
            rest /= m;
        }
        best = best.min(h(&u));
    }
    h_star - best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_gap_keeps_time() {
        let mut s = Ts2Search::new(0.5, 1.0, 1.0);
        assert_eq!(s.update(16.0, 0.0, 13.0, 30.0), Ts2Step::Move(16.0));
    }

    #[test]
    fn opposite_gaps_bisect() {
        let mut s = Ts2Search::new(0.5, 10.0, 1.0);
        assert_eq!(s.update(15.0, 2.0, 13.0, 30.0), Ts2Step::Move(14.0));
        assert_eq!(s.update(14.0, -2.0, 13.0, 30.0), Ts2Step::Move(14.5));
        assert!(s.bracketed());
        assert_eq!(s.eta, 0.25);
    }

    #[test]
    fn step_follows_sign_and_cap() {
        let mut s = Ts2Search::new(0.5, 1.0, -1.0);
        assert_eq!(s.update(15.0, 1.0, 13.0, 30.0), Ts2Step::Move(15.5));
        let mut s = Ts2Search::new(0.5, 1.0, 1.0);
        assert_eq!(s.update(15.0, 10.0, 13.0, 30.0), Ts2Step::Move(14.0));
    }

    #[test]
    fn boundary_is_flagged() {
        let mut s = Ts2Search::new(0.5, 1.0, 1.0);
        assert_eq!(s.update(13.0, 3.0, 13.0, 30.0), Ts2Step::Boundary(13.0));
    }

    #[test]
    fn grid_points_layout() {
        assert_eq!(grid_points(1.0, 3.0, 1), vec![2.0]);
        assert_eq!(grid_points(1.0, 3.0, 3), vec![1.0, 2.0, 3.0]);
    }
}
