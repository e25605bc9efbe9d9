//! RK4 with event localization on a problem with a closed-form answer:
//! x' = -x from x(0) = 1 first drops to 0.5 at t = ln 2.

use hocp::hybrid::{CrossingDirection, Manifold};
use hocp::integrator::{integrate_phase, EventSpec, TimeGrid};

fn main() -> hocp::Result<()> {
    let manifold = Manifold::coordinate("x - 0.5", 1, 0, 0.5, CrossingDirection::Falling);
    for h in [0.2, 0.1, 0.05] {
        let grid = TimeGrid::new(0.0, 2.0, h)?;
        let seg = integrate_phase(
            |x, _u| vec![-x[0]],
            &[1.0],
            &grid,
            |_t| Vec::new(),
            Some(EventSpec::new(&manifold)),
        )?;
        let t = seg.t_last();
        println!(
            "h = {h:<5} event at t = {t:.12}  error {:.1e}  x = {:.12}",
            (t - std::f64::consts::LN_2).abs(),
            seg.last_state()[0]
        );
    }
    Ok(())
}
