//! Forward simulation of the four-phase schedule with every control held
//! at its upper bound and the protocol started at t = 16.5.

use hocp::model::{EpiModel, Phase};
use hocp::solver::{evaluate_cost, forward_pass, PhaseControls, SolverConfig};

fn main() -> hocp::Result<()> {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let controls = PhaseControls::upper(&model.bounds);
    let traj = forward_pass(&model, &controls, 16.5, &cfg)?;

    let t = traj.switching_times;
    println!("switching times: {:.4} {:.4} {:.4}", t[0], t[1], t[2]);
    for phase in Phase::ALL {
        let seg = traj.segment(phase);
        println!(
            "{:<10} [{:>7.3}, {:>7.3}]  {} nodes",
            phase.label(),
            seg.t_first(),
            seg.t_last(),
            seg.len()
        );
    }
    println!("terminal state: {:.5?}", traj.terminal_state());
    println!("max mass error: {:.2e}", traj.max_mass_error());
    println!("cost J = {:.3}", evaluate_cost(&model, &traj).total);
    Ok(())
}
