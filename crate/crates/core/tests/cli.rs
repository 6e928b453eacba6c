//! The command-line front end: exit codes, report files and determinism.
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coherence-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_phi_plus(dir: &Path) -> String {
    let h = 0.5;
    let mut m = vec![vec![[0.0, 0.0]; 4]; 4];
    for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
        m[i][j] = [h, 0.0];
    }
    let body = serde_json::json!({ "dims": [2, 2], "matrix": m });
    let path = dir.join("phi.json");
    std::fs::write(&path, body.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn measure_prints_one_bit_for_phi_plus() {
    let dir = tempfile::tempdir().unwrap();
    let state = write_phi_plus(dir.path());
    let out = run(&["measure", "--name", "cmax", "--pattern", "0", "--state", &state]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-7);
}

#[test]
fn game_verify_reports_ratio_two() {
    let dir = tempfile::tempdir().unwrap();
    let state = write_phi_plus(dir.path());
    let out = run(&["game", "verify", "--state", &state]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["ratio"].as_f64().unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn bad_input_exits_with_two() {
    let out = run(&["suite", "run", "--suite", "S99", "--report", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["measure", "--name", "cmax", "--state", "/nonexistent/state.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_run_writes_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = run(&[
        "suite", "run", "--suite", "S1", "--trials", "0",
        "--report", json.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("suite,dims,trial"));
}

#[test]
fn suite_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let json = dir.path().join(format!("r{k}.json"));
        let csv = dir.path().join(format!("r{k}.csv"));
        let out = run(&[
            "suite", "run", "--suite", "S1,S6,S9", "--trials", "3", "--seed", "7",
            "--report", json.to_str().unwrap(), "--csv", csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        files.push((std::fs::read(json).unwrap(), std::fs::read(csv).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sdp_solve_reads_a_problem_file() {
    use coherence_lab::qmat::{cr, CMat};
    use coherence_lab::sdp::{Sense, SdpProblem, SparseHermitian};
    let mut p = SdpProblem::new(Sense::Max);
    let x = p.add_block(2);
    let c = CMat::from_row_slice(2, 2, &[cr(2.0), cr(0.0), cr(0.0), cr(1.0)]);
    p.add_objective(x, SparseHermitian::from_dense(&c));
    p.add_eq(vec![(x, SparseHermitian::identity(2))], 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, serde_json::to_string(&p).unwrap()).unwrap();
    let out = run(&["sdp", "solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("status: optimal"), "{text}");
    assert!(text.contains("certificate check: passed"));
}
