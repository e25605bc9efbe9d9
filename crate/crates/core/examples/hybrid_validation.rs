//! Validates the hybrid-system definition of the epidemic model and a
//! deliberately broken copy of it.

use hocp::hybrid::validate_system;
use hocp::EpiModel;

fn main() {
    let model = EpiModel::default();
    let def = model.hybrid_system();
    let report = validate_system(&def);
    println!(
        "reference: {} modes, {} transitions, valid = {}",
        def.modes.len(),
        def.transitions.len(),
        report.is_valid()
    );

    let mut broken = def.clone();
    broken.transitions[0].manifold = None;
    broken.modes[1].control_upper[0] = -1.0;
    broken.transitions[2].to = 1;
    for issue in validate_system(&broken).issues {
        println!("  issue: {issue}");
    }
}
