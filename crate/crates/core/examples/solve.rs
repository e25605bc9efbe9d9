//! Full optimal-control solve of the reference problem.

use hocp::io::export::solve_report;
use hocp::{solve, EpiModel, SolverConfig};

fn main() -> hocp::Result<()> {
    let sol = solve(&EpiModel::default(), &SolverConfig::default())?;
    print!("{}", solve_report(&sol));
    println!("costates just after each switching:");
    for (k, m) in sol.switching.multipliers.iter().enumerate() {
        println!(
            "  switch {}: multiplier {m:+.3}, gap {:+.2e}",
            k + 1,
            sol.switching.gaps[k]
        );
    }
    Ok(())
}
