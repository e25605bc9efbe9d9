use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const VARIANT: &str = "\
[thresholds]
i_low = 0.10
i_high = 0.12

[horizon]
tf = 80

[solver]
ts2_max = 75
";

fn hocp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hocp"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOCP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = hocp(&["solve", "--out", "run", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    for f in [
        "summary.json",
        "states.csv",
        "controls.csv",
        "adjoints.csv",
        "hamiltonian.csv",
        "cost.csv",
        "iterations.csv",
        "states.svg",
        "controls.svg",
        "cost.svg",
        "hamiltonian.svg",
    ] {
        assert!(dir.path().join("run").join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "converged");
    assert_eq!(summary["switching_times"].as_array().unwrap().len(), 3);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_hocp"))
        .args([
            "simulate",
            "--ts2",
            "16",
            "--control",
            "u_j=0.04",
            "--control",
            "protocol.u_v=0.05",
            "--control",
            "wfh.u_sigma_v=0.25",
            "--control",
            "wfh.u_sigma_s=0.25",
            "--control",
            "protocol.u_sigma_s=0.1",
        ])
        .current_dir(dir.path())
        .env("HOCP_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(target.join("states.csv").is_file());
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "a.toml",
        "[params]\nbeta_s = 0.3\nbeta_x = 1.0\n",
    );
    let o = hocp(&["solve", "--config", &unknown], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(
        stderr(&o).contains("beta_x") && stderr(&o).contains("line 3"),
        "{}",
        stderr(&o)
    );

    let mass = write(dir.path(), "b.toml", "[x0]\nS = 0.9\n");
    let o = hocp(&["solve", "--config", &mass], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("sum to 1"), "{}", stderr(&o));

    let o = hocp(&["solve", "--h=-1"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("solver.h"), "{}", stderr(&o));

    let o = hocp(&["sweep", "--range", "16", "--n", "3"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unreachable_threshold_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[thresholds]\ni_high = 0.9\n");
    let o = hocp(&["solve", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("I - I_high"), "{}", stderr(&o));
}

#[test]
fn early_protocol_switch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = hocp(
        &["simulate", "--ts2", "5", "--control", "u_j=0.04"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("t_s2"), "{}", stderr(&o));
}

#[test]
fn simulated_mass_is_conserved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", VARIANT);
    let o = hocp(
        &[
            "simulate", "--config", &cfg, "--ts2", "43.6", "--out", "sim",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sim/states.csv")).unwrap();
    let mass = column(&csv, "mass");
    assert!(mass.len() > 1000);
    assert!(mass.iter().all(|m| (m - 1.0).abs() <= 1e-8));
}

#[test]
fn single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = hocp(
        &["sweep", "--range", "16,18", "--n", "1", "--out", "sw"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("17,"));
}

#[test]
fn flipped_adjoint_fails_gradient_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = hocp(
        &["check", "--flip-adjoint-sign", "--out", "chk"],
        dir.path(),
    );
    assert_ne!(o.status.code(), Some(0));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("gradient"), "{report}");
    let json = fs::read_to_string(dir.path().join("chk/check.json")).unwrap();
    assert!(json.contains("\"passed\": false"));
}

#[test]
fn zero_weights_give_zero_cost() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{VARIANT}
[weights.rto_first]
a_i = 0
a_j = 0

[weights.wfh]
a_i = 0
a_j = 0
a_hv = 0
a_hs = 0
c = 0

[weights.protocol]
a_i = 0
a_j = 0
a_hs = 0
c = 0

[weights.rto_final]
a_e = 0
a_i = 0
a_j = 0

[terminal]
k_e = 0
k_i = 0
k_j = 0
"
    );
    let cfg = write(dir.path(), "z.toml", &text);
    let o = hocp(&["solve", "--config", &cfg, "--out", "z"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("z/cost.csv")).unwrap();
    assert!(
        csv.lines().last().unwrap().ends_with(",0"),
        "{}",
        csv.lines().last().unwrap()
    );
}
