use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hocp::io::commands::{self, CheckOptions, CommandError, Outcome};
use hocp::io::{load_config, RunConfig};

/// Optimal control of the four-phase hybrid epidemic model.
#[derive(Parser)]
#[command(name = "hocp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take the reference values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "HOCP_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Integration step override (days).
    #[arg(long)]
    h: Option<f64>,
    /// Suppress the report on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize controls and the protocol switching time.
    Solve(Common),
    /// Forward simulation with constant controls and a fixed switching time.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Protocol switching time t_s2 (days).
        #[arg(long)]
        ts2: f64,
        /// Constant control, `[phase.]name=value`; repeatable. Unset controls are zero.
        #[arg(long = "control")]
        controls: Vec<String>,
    },
    /// Cost and Hamiltonian gap over a grid of switching times.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Switching-time range `lo,hi`.
        #[arg(long, value_parser = parse_range)]
        range: (f64, f64),
        /// Number of grid points.
        #[arg(long)]
        n: usize,
    },
    /// Solve, then run the invariant checks.
    Check {
        #[command(flatten)]
        common: Common,
        /// Negate the costates before the gradient check.
        #[arg(long, hide = true)]
        flip_adjoint_sign: bool,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn config(common: &Common) -> Result<RunConfig, CommandError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(h) = common.h {
        cfg.solver.h = h;
        let issues = cfg.validate();
        if !issues.is_empty() {
            return Err(hocp::io::ConfigError::Invalid(issues).into());
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> (bool, Result<Outcome, CommandError>) {
    match cli.command {
        Command::Solve(c) => (
            c.quiet,
            config(&c).and_then(|cfg| commands::cmd_solve(&cfg, &c.out)),
        ),
        Command::Simulate {
            common: c,
            ts2,
            controls,
        } => (
            c.quiet,
            config(&c).and_then(|cfg| {
                let u = commands::parse_constant_controls(&controls)?;
                commands::cmd_simulate(&cfg, &u, ts2, &c.out)
            }),
        ),
        Command::Sweep {
            common: c,
            range: (lo, hi),
            n,
        } => (
            c.quiet,
            config(&c).and_then(|cfg| commands::cmd_sweep(&cfg, lo, hi, n, &c.out)),
        ),
        Command::Check {
            common: c,
            flip_adjoint_sign,
        } => (
            c.quiet,
            config(&c).and_then(|cfg| {
                commands::cmd_check(&cfg, &CheckOptions { flip_adjoint_sign }, &c.out)
            }),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; every other parse
            // failure is a usage error, which shares the config exit code.
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (quiet, result) = run(cli);
    match result {
        Ok(outcome) => {
            if !quiet {
                print!("{}", outcome.report);
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
