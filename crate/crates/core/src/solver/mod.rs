//! Indirect solution of the hybrid optimal control problem.
//!
//! One forward–backward sweep consists of:
//! 1. [`forward_pass`]: integrate the four phases with the current control
//!    profiles, detecting the two autonomous switchings on their manifolds;
//! 2. [`evaluate_cost`];
//! 3. [`backward_pass`]: integrate the costates backward from the terminal
//!    gradient, mapping them through each jump and pinning the autonomous
//!    multipliers with [`compute_p`] so the Hamiltonian is continuous there;
//! 4. [`update_controls`]: relax toward the pointwise Hamiltonian minimizer.
//!
//! [`optimize`] wraps this in the outer loop on the controlled switching time.

mod optimize;

pub use optimize::{
    gradient_check_x0, grid_points, grid_search_ts2, initial_guess, minimizer_shortfall,
    optimize_controls, solve, solve_from, GradientCheck, GridCandidate, GridSearch, InnerSolution,
    IterationLog, IterationRecord, Solution, SolveStatus, SwitchingReport, Ts2Search, Ts2Step,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{dot, Manifold};
use crate::integrator::{
    integrate_costate, integrate_phase, EventSpec, TimeGrid, TrajectorySegment,
};
use crate::model::{
    adjoint_jump, adjoint_rhs, hamiltonian, minimize_control, running_cost, terminal_cost,
    terminal_costate, vector_field, ControlBounds, EpiModel, Phase, Switch,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Integration step (days).
    pub h: f64,
    /// Control-update relaxation in (0, 1].
    pub alpha: f64,
    /// Initial switching-time gain (days per unit Hamiltonian gap).
    pub ts2_step: f64,
    /// Largest move of the switching time before a bracket is found (days).
    pub ts2_max_move: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub tol_control: f64,
    pub tol_hgap: f64,
    /// Lower bound on `t_s2` is `t_s1 + ts2_margin`.
    pub ts2_margin: f64,
    pub ts2_max: f64,
    /// Initial `t_s2 - t_s1`.
    pub ts2_init_offset: f64,
    /// Offset used to calibrate the sign of the switching-time update.
    pub calibration_delta: f64,
    pub event_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            alpha: 0.3,
            ts2_step: 0.5,
            ts2_max_move: 1.0,
            max_outer_iters: 500,
            max_inner_iters: 5000,
            tol_control: 1e-6,
            tol_hgap: 1e-3,
            ts2_margin: 0.1,
            ts2_max: 30.0,
            ts2_init_offset: 3.0,
            calibration_delta: 0.1,
            event_tol: crate::integrator::EVENT_TOL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let positive = [
            ("h", self.h),
            ("ts2_step", self.ts2_step),
            ("ts2_max_move", self.ts2_max_move),
            ("tol_control", self.tol_control),
            ("tol_hgap", self.tol_hgap),
            ("ts2_margin", self.ts2_margin),
            ("ts2_init_offset", self.ts2_init_offset),
            ("calibration_delta", self.calibration_delta),
            ("event_tol", self.event_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                issues.push(format!("solver.{name} must be strictly positive (got {v})"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            issues.push(format!(
                "solver.alpha must lie in (0, 1] (got {})",
                self.alpha
            ));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            issues.push("solver iteration limits must be positive".to_string());
        }
        if !self.ts2_max.is_finite() {
            issues.push("solver.ts2_max must be finite".to_string());
        }
        issues
    }
}

/// Control samples of one phase, linearly interpolated in absolute time and
/// held constant beyond the first and last samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProfile {
    pub dim: usize,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ControlProfile {
    pub fn zeros(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self {
            dim: value.len(),
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn from_samples(times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(times.len(), values.len());
        assert!(!times.is_empty());
        Self {
            dim: values[0].len(),
            times,
            values,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        if t1 <= t0 {
            return self.values[k + 1].clone();
        }
        crate::integrator::lerp(&self.values[k], &self.values[k + 1], (t - t0) / (t1 - t0))
    }
}

/// One control profile per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseControls {
    pub phases: [ControlProfile; 4],
}

impl PhaseControls {
    pub fn zeros() -> Self {
        Self {
            phases: Phase::ALL.map(|p| ControlProfile::zeros(p.mode().control_dim())),
        }
    }

    /// Every control held at its upper bound.
    pub fn upper(bounds: &ControlBounds) -> Self {
        Self {
            phases: Phase::ALL.map(|p| ControlProfile::constant(bounds.upper(p))),
        }
    }

    pub fn get(&self, phase: Phase) -> &ControlProfile {
        &self.phases[phase.ordinal()]
    }

    /// Largest absolute difference between two sets of profiles at the
    /// sample times of `self`.
    pub fn distance(&self, other: &PhaseControls) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.phases.iter().zip(&other.phases) {
            for (t, v) in a.times.iter().zip(&a.values) {
                let w = b.eval(*t);
                for (x, y) in v.iter().zip(&w) {
                    d = d.max((x - y).abs());
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSegment {
    pub phase: Phase,
    pub segment: TrajectorySegment,
}

/// Four phase segments `[rto1, wfh, protocol, rto4]` with the switching
/// times and the states immediately before each jump.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub segments: Vec<PhaseSegment>,
    pub switching_times: [f64; 3],
    pub switching_states_pre: [Vec<f64>; 3],
}

impl HybridTrajectory {
    pub fn segment(&self, phase: Phase) -> &TrajectorySegment {
        &self.segments[phase.ordinal()].segment
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.segment(Phase::RtoFinal).last_state()
    }

    /// Largest `|sum(x) - 1|` over every stored sample.
    pub fn max_mass_error(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.segment.states.iter())
            .map(|x| (x.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Integrates up to the first autonomous switching only; returns `t_s1`.
pub fn first_switching_time(
    model: &EpiModel,
    controls: &PhaseControls,
    cfg: &SolverConfig,
) -> Result<f64> {
    let seg = integrate_first_phase(model, controls, cfg)?;
    Ok(seg.t_last())
}

fn event<'a>(manifold: &'a Manifold, cfg: &SolverConfig) -> EventSpec<'a> {
    EventSpec {
        manifold,
        tol: cfg.event_tol,
    }
}

fn integrate_mode(
    model: &EpiModel,
    phase: Phase,
    x0: &[f64],
    t_start: f64,
    t_end: f64,
    controls: &PhaseControls,
    cfg: &SolverConfig,
    manifold: Option<&Manifold>,
) -> Result<TrajectorySegment> {
    let grid = TimeGrid::anchored(t_start, t_end, cfg.h, model.horizon.t0)?;
    let mode = phase.mode();
    let params = model.params;
    let profile = controls.get(phase);
    integrate_phase(
        |x: &[f64], u: &[f64]| vector_field(mode, x, u, &params),
        x0,
        &grid,
        |t| profile.eval(t),
        manifold.map(|m| event(m, cfg)),
    )
}

fn integrate_first_phase(
    model: &EpiModel,
    controls: &PhaseControls,
    cfg: &SolverConfig,
) -> Result<TrajectorySegment> {
    let m = Switch::RtoToWfh.manifold(&model.thresholds);
    integrate_mode(
        model,
        Phase::RtoFirst,
        &model.x0,
        model.horizon.t0,
        model.horizon.tf,
        controls,
        cfg,
        m.as_ref(),
    )
}

/// Simulates the scheduled cycle rto -> wfh -> protocol -> rto with the
/// given control profiles and controlled switching time `t_s2`.
pub fn forward_pass(
    model: &EpiModel,
    controls: &PhaseControls,
    t_s2: f64,
    cfg: &SolverConfig,
) -> Result<HybridTrajectory> {
    let tf = model.horizon.tf;
    let seg1 = integrate_first_phase(model, controls, cfg)?;
    let t_s1 = seg1.t_last();
    if !(t_s2 > t_s1) {
        return Err(Error::InfeasibleSchedule(format!(
            "t_s2 = {t_s2} does not follow t_s1 = {t_s1}"
        )));
    }
    if !(t_s2 < tf) {
        return Err(Error::InfeasibleSchedule(format!(
            "t_s2 = {t_s2} not before t_f = {tf}"
        )));
    }
    let pre1 = seg1.last_state().to_vec();
    let x2 = Switch::RtoToWfh.jump()(&pre1);
    let seg2 = integrate_mode(model, Phase::Wfh, &x2, t_s1, t_s2, controls, cfg, None)?;

    let pre2 = seg2.last_state().to_vec();
    let x3 = Switch::WfhToProtocol.jump()(&pre2);
    let m3 = Switch::ProtocolToRto.manifold(&model.thresholds);
    let seg3 = integrate_mode(
        model,
        Phase::Protocol,
        &x3,
        t_s2,
        tf,
        controls,
        cfg,
        m3.as_ref(),
    )?;
    let t_s3 = seg3.t_last();
    if !(t_s3 < tf - 1e-9) {
        return Err(Error::InfeasibleSchedule(format!(
            "final RTO phase is empty (t_s3 = {t_s3})"
        )));
    }

    let pre3 = seg3.last_state().to_vec();
    let x4 = Switch::ProtocolToRto.jump()(&pre3);
    let seg4 = integrate_mode(model, Phase::RtoFinal, &x4, t_s3, tf, controls, cfg, None)?;

    Ok(HybridTrajectory {
        segments: vec![
            PhaseSegment {
                phase: Phase::RtoFirst,
                segment: seg1,
            },
            PhaseSegment {
                phase: Phase::Wfh,
                segment: seg2,
            },
            PhaseSegment {
                phase: Phase::Protocol,
                segment: seg3,
            },
            PhaseSegment {
                phase: Phase::RtoFinal,
                segment: seg4,
            },
        ],
        switching_times: [t_s1, t_s2, t_s3],
        switching_states_pre: [pre1, pre2, pre3],
    })
}

/// Running-cost integral of every phase plus the terminal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub running: [f64; 4],
    pub terminal: f64,
    pub total: f64,
}

/// Integral of sampled values: composite Simpson on each run of equally
/// spaced nodes (3/8 rule closing odd runs), trapezoid on isolated
/// intervals such as the short steps next to switching times.
pub fn integrate_samples(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut start = 0;
    while start < n - 1 {
        let d = times[start + 1] - times[start];
        let mut end = start + 1;
        while end < n - 1 {
            let d2 = times[end + 1] - times[end];
            if (d2 - d).abs() > 1e-9 * d.abs().max(d2.abs()) {
                break;
            }
            end += 1;
        }
        total += uniform_rule(
            &values[start..=end],
            (times[end] - times[start]) / (end - start) as f64,
        );
        start = end;
    }
    total
}

fn uniform_rule(v: &[f64], d: f64) -> f64 {
    let m = v.len() - 1;
    match m {
        0 => 0.0,
        1 => 0.5 * d * (v[0] + v[1]),
        _ if m.is_multiple_of(2) => simpson(v, d),
        _ => {
            let k = m - 3;
            let head = if k > 0 { simpson(&v[..=k], d) } else { 0.0 };
            head + 3.0 * d / 8.0 * (v[k] + 3.0 * v[k + 1] + 3.0 * v[k + 2] + v[k + 3])
        }
    }
}

fn simpson(v: &[f64], d: f64) -> f64 {
    let m = v.len() - 1;
    let mut s = v[0] + v[m];
    for (i, x) in v.iter().enumerate().take(m).skip(1) {
        s += if i % 2 == 1 { 4.0 * x } else { 2.0 * x };
    }
    s * d / 3.0
}

pub fn running_cost_samples(model: &EpiModel, phase: Phase, seg: &TrajectorySegment) -> Vec<f64> {
    seg.states
        .iter()
        .zip(&seg.controls)
        .map(|(x, u)| running_cost(phase, x, u, &model.weights))
        .collect()
}

pub fn evaluate_cost(model: &EpiModel, traj: &HybridTrajectory) -> CostBreakdown {
    let mut running = [0.0; 4];
    for ps in &traj.segments {
        let values = running_cost_samples(model, ps.phase, &ps.segment);
        running[ps.phase.ordinal()] = integrate_samples(&ps.segment.times, &values);
    }
    let terminal = terminal_cost(traj.terminal_state(), &model.terminal);
    CostBreakdown {
        running,
        terminal,
        total: running.iter().sum::<f64>() + terminal,
    }
}

/// Costates aligned with the forward segments, plus the jump multipliers
/// `[p1, p2, p3]` (`p2` is always zero: that switching is controlled).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub segments: Vec<Vec<Vec<f64>>>,
    pub multipliers: [f64; 3],
}

impl AdjointTrajectory {
    pub fn segment(&self, phase: Phase) -> &[Vec<f64>] {
        &self.segments[phase.ordinal()]
    }

    pub fn initial(&self) -> &[f64] {
        &self.segments[0][0]
    }
}

/// Multiplier of an autonomous switching that makes the Hamiltonian
/// continuous: solves `H_before(lambda0 + p grad m) = h_after` for `p`,
/// using the stored applied control `u_minus`.
pub fn compute_p(
    manifold: &Manifold,
    before: Phase,
    x_minus: &[f64],
    u_minus: &[f64],
    lambda0: &[f64],
    h_after: f64,
    model: &EpiModel,
) -> Result<f64> {
    let f = vector_field(before.mode(), x_minus, u_minus, &model.params);
    let rate = dot(&manifold.gradient, &f);
    if rate.abs() < 1e-10 {
        return Err(Error::Transversality {
            manifold: manifold.name.clone(),
            rate,
        });
    }
    let h_before = hamiltonian(
        before,
        x_minus,
        lambda0,
        u_minus,
        &model.params,
        &model.weights,
    );
    Ok((h_after - h_before) / rate)
}

fn costate_segment(
    model: &EpiModel,
    phase: Phase,
    seg: &TrajectorySegment,
    end: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let (p, w) = (model.params, model.weights);
    integrate_costate(seg, end, |x, u, l| adjoint_rhs(phase, x, l, u, &p, &w))
}

fn h_at(model: &EpiModel, phase: Phase, seg: &TrajectorySegment, lambda: &[f64], k: usize) -> f64 {
    hamiltonian(
        phase,
        &seg.states[k],
        lambda,
        &seg.controls[k],
        &model.params,
        &model.weights,
    )
}

/// Integrates the costates backward from the terminal gradient through the
/// three jumps.
pub fn backward_pass(model: &EpiModel, traj: &HybridTrajectory) -> Result<AdjointTrajectory> {
    let mut costates: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 4];
    let mut multipliers = [0.0; 3];

    let seg4 = traj.segment(Phase::RtoFinal);
    let end = terminal_costate(seg4.last_state(), &model.terminal);
    costates[3] = costate_segment(model, Phase::RtoFinal, seg4, &end)?;

    for switch in [
        Switch::ProtocolToRto,
        Switch::WfhToProtocol,
        Switch::RtoToWfh,
    ] {
        let (before, after) = (switch.before(), switch.after());
        let seg_after = traj.segment(after);
        let seg_before = traj.segment(before);
        let lambda_plus = &costates[after.ordinal()][0];
        let mut lambda_minus = adjoint_jump(switch, lambda_plus, 0.0)?;
        if let Some(m) = switch.manifold(&model.thresholds) {
            let h_after = h_at(model, after, seg_after, lambda_plus, 0);
            let k = seg_before.len() - 1;
            let p = compute_p(
                &m,
                before,
                &seg_before.states[k],
                &seg_before.controls[k],
                &lambda_minus,
                h_after,
                model,
            )?;
            for (l, g) in lambda_minus.iter_mut().zip(&m.gradient) {
                *l += p * g;
            }
            multipliers[switch.ordinal()] = p;
        }
        costates[before.ordinal()] = costate_segment(model, before, seg_before, &lambda_minus)?;
    }

    Ok(AdjointTrajectory {
        segments: costates,
        multipliers,
    })
}

/// `H(t_s-) - H(t_s+)` at the given switching.
pub fn hamiltonian_gap(
    model: &EpiModel,
    traj: &HybridTrajectory,
    adjoint: &AdjointTrajectory,
    switch: Switch,
) -> f64 {
    let (before, after) = (switch.before(), switch.after());
    let seg_b = traj.segment(before);
    let k = seg_b.len() - 1;
    let h_minus = h_at(model, before, seg_b, &adjoint.segment(before)[k], k);
    let h_plus = h_at(
        model,
        after,
        traj.segment(after),
        &adjoint.segment(after)[0],
        0,
    );
    h_minus - h_plus
}

pub fn hamiltonian_gaps(
    model: &EpiModel,
    traj: &HybridTrajectory,
    adjoint: &AdjointTrajectory,
) -> [f64; 3] {
    Switch::ALL.map(|s| hamiltonian_gap(model, traj, adjoint, s))
}

/// Hamiltonian at every stored node, per phase.
pub fn hamiltonian_trace(
    model: &EpiModel,
    traj: &HybridTrajectory,
    adjoint: &AdjointTrajectory,
) -> Vec<Vec<f64>> {
    traj.segments
        .iter()
        .map(|ps| {
            let lambdas = adjoint.segment(ps.phase);
            (0..ps.segment.len())
                .map(|k| h_at(model, ps.phase, &ps.segment, &lambdas[k], k))
                .collect()
        })
        .collect()
}

/// Relaxed control update toward the pointwise Hamiltonian minimizer at
/// every node: `u_new = (1 - alpha) u_old + alpha u_star`, clamped.
/// Returns the new profiles and `max |u_new - u_old|`.
pub fn update_controls(
    model: &EpiModel,
    traj: &HybridTrajectory,
    adjoint: &AdjointTrajectory,
    alpha: f64,
) -> (PhaseControls, f64) {
    let mut sup: f64 = 0.0;
    let profiles = Phase::ALL.map(|phase| {
        let seg = traj.segment(phase);
        let lambdas = adjoint.segment(phase);
        let upper = model.bounds.upper(phase);
        let values = (0..seg.len())
            .map(|k| {
                let star = minimize_control(
                    phase,
                    &seg.states[k],
                    &lambdas[k],
                    &model.weights,
                    &model.bounds,
                );
                let old = &seg.controls[k];
                old.iter()
                    .zip(&star)
                    .zip(&upper)
                    .map(|((o, s), hi)| {
                        let v = ((1.0 - alpha) * o + alpha * s).clamp(0.0, *hi);
                        sup = sup.max((v - o).abs());
                        v
                    })
                    .collect()
            })
            .collect();
        ControlProfile::from_samples(seg.times.clone(), values)
    });
    (PhaseControls { phases: profiles }, sup)
}

/// Forward pass, cost and backward pass for fixed controls.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectory: HybridTrajectory,
    pub adjoint: AdjointTrajectory,
    pub cost: CostBreakdown,
}

pub fn evaluate_schedule(
    model: &EpiModel,
    controls: &PhaseControls,
    t_s2: f64,
    cfg: &SolverConfig,
) -> Result<Evaluation> {
    let trajectory = forward_pass(model, controls, t_s2, cfg)?;
    let cost = evaluate_cost(model, &trajectory);
    let adjoint = backward_pass(model, &trajectory)?;
    Ok(Evaluation {
        trajectory,
        adjoint,
        cost,
    })
}
