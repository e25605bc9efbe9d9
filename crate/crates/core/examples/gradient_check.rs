//! Compares the initial costate with a central finite difference of the
//! total cost with respect to each initial compartment.

use hocp::model::Compartment;
use hocp::solver::gradient_check_x0;
use hocp::{solve, EpiModel, SolverConfig};

fn main() -> hocp::Result<()> {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let sol = solve(&model, &cfg)?;
    for c in [
        Compartment::V,
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::J,
        Compartment::R,
    ] {
        let g = gradient_check_x0(&model, &cfg, &sol.controls, sol.t_s2, &sol.adjoint, c, 1e-5)?;
        println!(
            "{:<2} adjoint {:>12.5} finite difference {:>12.5} rel {:.1e}{}",
            c.label(),
            g.adjoint,
            g.finite_difference,
            g.relative_error(),
            g.note
                .as_deref()
                .map(|n| format!("  ({n})"))
                .unwrap_or_default()
        );
    }
    Ok(())
}
