//! Cost landscape over the protocol switching time: each grid point runs
//! the inner control optimization with `t_s2` held fixed.

use hocp::model::EpiModel;
use hocp::solver::{grid_search_ts2, SolverConfig};

fn main() -> hocp::Result<()> {
    let model = EpiModel::default();
    let cfg = SolverConfig::default();
    let grid = grid_search_ts2(&model, &cfg, 14.0, 20.0, 13, None)?;
    println!("{:>8} {:>12} {:>12}", "t_s2", "J", "H gap");
    for c in &grid.candidates {
        match (c.cost, c.gap) {
            (Some(j), Some(g)) => println!("{:>8.3} {j:>12.4} {g:>+12.4}", c.t_s2),
            _ => println!(
                "{:>8.3} {:>12}  {}",
                c.t_s2,
                "-",
                c.error.as_deref().unwrap_or("")
            ),
        }
    }
    if let Some((t, j)) = grid.best {
        println!("best grid point: t_s2 = {t:.3}, J = {j:.4}");
    }
    Ok(())
}
