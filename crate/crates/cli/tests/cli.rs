use std::path::Path;
use std::process::{Command, Output};

const BANDS: &str = r#"command = "bands"
[lattice]
basis = [[6.283185307179586]]
[potential]
cosines = [{ n = [1], amp = 1.0 }]
[numeric]
cutoff = 6.5
grid = [8]
bands = 3
"#;

const PUMP: &str = r#"command = "pump"
[lattice]
basis = [[6.283185307179586]]
[numeric]
cutoff = 6.5
grid = [16]
bands = 2
[pump]
amp = 1.0
epsilons = [0.125, 0.0625]
steps = 512
times = 16
"#;

fn bloch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bloch"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn setup(name: &str, text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(name), text).unwrap();
    dir
}

#[test]
fn bands_writes_one_row_per_k_point() {
    let dir = setup("bands.toml", BANDS);
    let out = bloch(dir.path(), &["run", "bands.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k_1,E_0,E_1,E_2");
    assert_eq!(lines.len(), 9);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bands.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "bands");
    assert_eq!(summary["spec_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["cutoff"], 6.5);
    assert!(summary["g"]["gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = setup("bands.toml", BANDS);
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert!(bloch(dir.path(), &["run", "bands.toml"]).status.success());
    let (a, b) = (read("bands.csv"), read("bands.json"));
    assert!(bloch(dir.path(), &["run", "bands.toml", "--set", "threads=3"]).status.success());
    assert_eq!(a, read("bands.csv"));
    assert!(bloch(dir.path(), &["run", "bands.toml"]).status.success());
    assert_eq!(b, read("bands.json"));
}

#[test]
fn check_expands_the_farey_fluxes() {
    let dir = setup("bf.toml", "command = \"butterfly\"\n[butterfly]\nq_max = 10\ngrid = [8, 8]\n");
    let out = bloch(dir.path(), &["check", "bf.toml"]);
    assert!(out.status.success());
    let spec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec["butterfly"]["fluxes"].as_array().unwrap().len(), 32);
    let out = bloch(dir.path(), &["check", "bf.toml", "--set", "butterfly.q_max=12"]);
    let spec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec["butterfly"]["fluxes"].as_array().unwrap().len(), 46);
}

#[test]
fn butterfly_chern_numbers_sum_to_zero() {
    let dir = setup("bf.toml", "command = \"butterfly\"\n[butterfly]\nq_max = 5\ngrid = [8, 8]\n");
    assert!(bloch(dir.path(), &["run", "bf.toml", "--chern"]).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("butterfly.json")).unwrap()).unwrap();
    let c: Vec<i64> = summary["chern"]["2/5"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    assert_eq!(c, vec![-2, 3, -2, 3, -2]);
}

#[test]
fn invalid_value_names_key_and_line() {
    let dir = setup("bands.toml", BANDS);
    let out = bloch(dir.path(), &["run", "bands.toml", "--set", "numeric.cutoff=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["key"], "numeric.cutoff");
    assert_eq!(err["line"], 7);
}

#[test]
fn unknown_key_is_rejected() {
    let dir = setup("bands.toml", &BANDS.replace("bands = 3", "bands = 3\nbnads = 2"));
    let out = bloch(dir.path(), &["check", "bands.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["line"], 10);
    assert!(err["message"].as_str().unwrap().contains("bnads"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bloch(dir.path(), &["run", "absent.toml"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = setup("bands.toml", BANDS);
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = bloch(dir.path(), &["run", "bands.toml", "--set", "output.csv=blocker/x.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["path"], "blocker/x.csv");
}

#[test]
fn closed_pump_gap_reports_where() {
    let dir = setup("pump.toml", PUMP);
    let out = bloch(dir.path(), &["run", "pump.toml", "--set", "pump.amp=0.0"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["kind"], "gap_closure");
    assert!(err["k"].is_array());
    assert!(err["t"].is_number());
    assert!(!dir.path().join("pump.csv").exists());
}

#[test]
fn pump_transports_one_cell() {
    let dir = setup("pump.toml", PUMP);
    assert!(bloch(dir.path(), &["run", "pump.toml"]).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pump.json")).unwrap()).unwrap();
    assert_eq!(summary["pump_chern"], 1);
    assert!((summary["dP_ksv"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let last = summary["dP_eps"].as_array().unwrap()[1].as_f64().unwrap();
    assert!((last - 1.0).abs() < 1e-2);
    let csv = std::fs::read_to_string(dir.path().join("pump.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epsilon,t,J_eps,J_ksv");
    assert_eq!(csv.lines().count(), 1 + 2 * 16);
}

#[test]
fn dynamics_first_order_beats_zeroth() {
    let text = r#"command = "dynamics"
[lattice]
basis = [[6.283185307179586]]
[potential]
cosines = [{ n = [1], amp = 1.0 }]
[numeric]
cutoff = 6.5
grid = [32]
bands = 3
[dynamics]
epsilons = [0.1, 0.05]
k0 = [0.1]
x0 = [0.0]
force = [0.3]
"#;
    let dir = setup("dyn.toml", text);
    assert!(bloch(dir.path(), &["run", "dyn.toml"]).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("dynamics.json")).unwrap()).unwrap();
    assert!((summary["fitted_order"]["zeroth"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert!((summary["fitted_order"]["first"].as_f64().unwrap() - 2.0).abs() < 0.1);
    let csv = std::fs::read_to_string(dir.path().join("dynamics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "epsilon,s,r_1,k_1,mean_x_1,mean_k_1,norm,energy,zeroth_x_1,first_x_1"
    );
}
