use hocp::error::Error;
use hocp::model::{EpiModel, Phase, TerminalWeights};
use hocp::solver::{
    evaluate_cost, first_switching_time, forward_pass, grid_search_ts2, solve, solve_from,
    ControlProfile, PhaseControls, SolveStatus, SolverConfig,
};

/// With raised thresholds the uncontrolled epidemic crosses both of them
/// (near t = 40.6 and t = 62.1), so every schedule stage is reachable.
fn uncontrolled_feasible() -> EpiModel {
    let mut model = EpiModel::default();
    model.thresholds.i_low = 0.10;
    model.thresholds.i_high = 0.12;
    model.horizon.tf = 80.0;
    model
}

/// Quarantine at `u_j` from the first switching on.
fn late_quarantine(u_j: f64) -> PhaseControls {
    let mut c = PhaseControls::zeros();
    for p in &Phase::ALL[1..] {
        let mut v = vec![0.0; p.mode().control_dim()];
        v[0] = u_j;
        c.phases[p.ordinal()] = ControlProfile::constant(v);
    }
    c
}

#[test]
fn zero_controls_switch_early_but_never_end_protocol() {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let t_s1 = first_switching_time(&model, &PhaseControls::zeros(), &cfg).unwrap();
    assert!(t_s1 < 13.02);
    assert!((t_s1 - 7.8486386).abs() < 1e-6);
    let err = forward_pass(&model, &PhaseControls::zeros(), t_s1 + 3.0, &cfg).unwrap_err();
    match err {
        Error::NoCrossing { manifold, .. } => assert!(manifold.contains("I_low")),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn uncontrolled_variant_has_four_phases() {
    let model = uncontrolled_feasible();
    let cfg = SolverConfig::default();
    let traj = forward_pass(&model, &PhaseControls::zeros(), 43.6, &cfg).unwrap();
    assert!((traj.switching_times[0] - 40.60292867).abs() < 1e-6);
    assert!((traj.switching_times[2] - 62.11358496).abs() < 1e-6);
    assert!(traj.max_mass_error() <= 1e-8);
}

#[test]
fn quarantine_lowers_cost() {
    let model = uncontrolled_feasible();
    let cfg = SolverConfig::default();
    let run = |c: &PhaseControls| {
        let tr = forward_pass(&model, c, 43.6, &cfg).unwrap();
        (tr.switching_times[2], evaluate_cost(&model, &tr).total)
    };
    let (end_free, j_free) = run(&PhaseControls::zeros());
    let (end_q, j_q) = run(&late_quarantine(0.04));
    assert!(end_q < end_free);
    assert!(j_q < j_free, "{j_q} vs {j_free}");
}

#[test]
fn schedule_ordering_is_enforced() {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let u = PhaseControls::upper(&model.bounds);
    for t in [1.0, 13.0, 40.0] {
        assert!(matches!(
            forward_pass(&model, &u, t, &cfg),
            Err(Error::InfeasibleSchedule(_))
        ));
    }
}

#[test]
fn zero_cost_problem() {
    let mut model = uncontrolled_feasible();
    model.weights = model.weights.without_state_costs();
    model.terminal = TerminalWeights {
        k_e: 0.0,
        k_i: 0.0,
        k_j: 0.0,
    };
    let cfg = SolverConfig {
        ts2_max: 75.0,
        ..SolverConfig::default()
    };
    let sol = solve(&model, &cfg).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    assert_eq!(sol.cost.total, 0.0);
    assert_eq!(sol.switching.gaps, [0.0; 3]);
    assert!(sol
        .controls
        .phases
        .iter()
        .all(|p| p.values.iter().flatten().all(|u| *u == 0.0)));
}

#[test]
fn reference_solution_invariants() {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let sol = solve(&model, &cfg).unwrap();
    let t = sol.trajectory.switching_times;
    assert!(model.horizon.t0 < t[0] && t[0] < t[1] && t[1] < t[2] && t[2] < model.horizon.tf);
    for p in Phase::ALL {
        let upper = model.bounds.upper(p);
        for u in &sol.trajectory.segment(p).controls {
            assert!(u.iter().zip(&upper).all(|(v, hi)| *v >= 0.0 && v <= hi));
        }
    }
    // Autonomous dynamics: H is constant along each phase.
    for (k, h) in sol.hamiltonian_trace.iter().enumerate() {
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let dev = h.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        assert!(
            dev <= 1e-2 * mean.abs(),
            "phase {k}: deviation {dev} around {mean}"
        );
    }
    assert_eq!(sol.switching.multipliers[1], 0.0);
}

#[test]
fn starting_points_agree() {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let a = solve_from(&model, &cfg, Some(15.39)).unwrap();
    let b = solve_from(&model, &cfg, Some(17.39)).unwrap();
    assert_eq!(a.status, SolveStatus::Converged);
    assert_eq!(b.status, SolveStatus::Converged);
    assert!((a.t_s2 - b.t_s2).abs() < 0.02, "{} vs {}", a.t_s2, b.t_s2);
}

#[test]
fn grid_search_shapes() {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let t_star = solve(&model, &cfg).unwrap().t_s2;

    let one = grid_search_ts2(&model, &cfg, 15.0, 17.0, 1, None).unwrap();
    assert_eq!(one.candidates.len(), 1);
    assert_eq!(one.candidates[0].t_s2, 16.0);
    assert!(one.best.is_none());

    let three = grid_search_ts2(&model, &cfg, t_star - 1.0, t_star + 1.0, 3, None).unwrap();
    let costs: Vec<f64> = three.candidates.iter().map(|c| c.cost.unwrap()).collect();
    assert!(costs[1] < costs[0] && costs[1] < costs[2]);

    // The gap changes sign across the minimum.
    let gaps: Vec<f64> = three.candidates.iter().map(|c| c.gap.unwrap()).collect();
    assert!(gaps[0] < 0.0 && gaps[2] > 0.0);

    // Infeasible candidates are recorded, not fatal.
    let wide = grid_search_ts2(&model, &cfg, 5.0, t_star, 2, None).unwrap();
    assert!(wide.candidates[0].cost.is_none() && wide.candidates[0].error.is_some());
    assert!(wide.candidates[1].cost.is_some());
}

#[test]
fn unreachable_threshold_is_reported() {
    let mut model = EpiModel::default();
    model.thresholds.i_high = 0.9;
    match solve(&model, &SolverConfig::default()) {
        Err(Error::NoCrossing { manifold, .. }) => assert!(manifold.contains("I_high")),
        other => panic!("unexpected {other:?}"),
    }
}
