//! Parses a partial TOML configuration (unset keys keep their reference
//! values) and shows how bad input is reported.

use hocp::io::{parse_config, write_config};

fn main() {
    let text = "\
[params]
beta_s = 0.25

[thresholds]
i_high = 0.05

[solver]
h = 0.02
";
    let cfg = parse_config(text).expect("valid configuration");
    println!(
        "beta_s = {}, beta_v = {} (default)",
        cfg.model.params.beta_s, cfg.model.params.beta_v
    );
    println!(
        "i_high = {}, h = {}",
        cfg.model.thresholds.i_high, cfg.solver.h
    );

    for bad in [
        "[params]\nbeta_s = 0.3\nbeta_q = 1\n",
        "[x0]\nS = 0.5\n",
        "[horizon]\ntf = \"long\"\n",
    ] {
        println!("error: {}", parse_config(bad).unwrap_err());
    }

    println!("--- full configuration ---\n{}", write_config(&cfg));
}
