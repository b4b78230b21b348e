use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const PRINTED_K: [f64; 4] = [-2.4920, -0.1957, 1.4115, -3.8216];

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn lipcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipcon"))
        .args(args)
        .env_remove("LIPCON_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn scalar_model(a: f64, b: f64) -> String {
    format!(
        r#"{{"a": [[{a}]], "b": [[{b}]], "d1": [[0.0]], "d2": [[0.0]], "c": [[1.0]],
            "alpha": 0.0, "nonlinearity": {{"kind": "zero"}}}}"#
    )
}

const TWO_NODE: &str = "nodes 2\n1 2\n2 1\n";

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn graph_reports_manipulator_spectra() {
    let r = json(&lipcon(&["graph", data("manipulator.edges").to_str().unwrap()]));
    let g = &r["graph"];
    assert_eq!(g["flags"]["balanced"], true);
    assert_eq!(g["flags"]["strongly_connected"], true);
    assert!((f(&g["lambda2"]) - 0.8139).abs() <= 1e-3);
    for v in g["r"].as_array().unwrap() {
        assert!((f(v) - 1.0 / 6.0).abs() < 1e-9);
    }
    assert!(r["provenance"]["seed"].is_null());
    assert_eq!(r["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn graph_two_node_and_empty() {
    let dir = TempDir::new().unwrap();
    let r = json(&lipcon(&["graph", &write(&dir, "two", TWO_NODE)]));
    assert!((f(&r["graph"]["a_of_l"]) - 2.0).abs() < 1e-12);

    let out = lipcon(&["graph", &write(&dir, "empty", "nodes 3\n")]);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let r = json(&out);
    let flags = &r["graph"]["flags"];
    assert_eq!(flags["strongly_connected"], false);
    assert_eq!(flags["balanced"], true);
    assert_eq!(flags["has_spanning_tree"], false);
    assert!(flags["leader"].is_null());
    assert!(r["graph"]["r"].is_null());
    assert!(stderr.contains("not strongly connected"), "{stderr}");
}

#[test]
fn graph_parse_error_names_line() {
    let dir = TempDir::new().unwrap();
    let out = lipcon(&["graph", &write(&dir, "bad", "nodes 3\n1 2\n2 x\n")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn graph_reports_leader_follower_data() {
    let dir = TempDir::new().unwrap();
    let r = json(&lipcon(&["graph", &write(&dir, "path", "nodes 3\n1 2\n2 3\n")]));
    let lf = &r["graph"]["leader_follower"];
    assert_eq!(lf["leader"], 1);
    assert_eq!(lf["q"], serde_json::json!([1.0, 2.0]));
    // 2x2 closed form for H = [[1, -1/4], [-1/4, 1/2]].
    let closed = 0.75 - (0.0625f64 + 0.0625).sqrt();
    assert!((f(&lf["lambda1_h"]) - closed).abs() < 1e-12);
}

#[test]
fn out_dir_env_is_honoured() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lipcon"))
        .args(["graph", data("manipulator.edges").to_str().unwrap()])
        .env("LIPCON_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, serde_json::from_slice::<Value>(&out.stdout).unwrap());
}

#[test]
fn synth_with_published_certificate() {
    let r = json(&lipcon(&[
        "synth",
        data("manipulator.json").to_str().unwrap(),
        data("manipulator.edges").to_str().unwrap(),
        "--mode",
        "hinf",
        "--cert",
        data("published_cert.json").to_str().unwrap(),
    ]));
    let d = &r["runs"][0]["design"];
    // 29.6636 / lambda_2 with the unrounded lambda_2.
    assert!((f(&d["c_threshold"]) - 29.6636 / 0.813_859_3).abs() < 1e-4);
    for (got, want) in d["k"][0].as_array().unwrap().iter().zip(PRINTED_K) {
        assert!((f(got) - want).abs() <= 5e-3);
    }
    assert_eq!(r["runs"][0]["certificate"]["injected"], true);
    assert_eq!(f(&d["gamma"]), 2.0);
}

#[test]
fn synth_scalar_two_node() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", &scalar_model(-1.0, 1.0));
    let cert = write(&dir, "c.json", r#"{"p": [[1.0]], "scalar": 1.0}"#);
    let r = json(&lipcon(&["synth", &model, &write(&dir, "g", TWO_NODE), "--cert", &cert]));
    let d = &r["runs"][0]["design"];
    assert!((f(&d["k"][0][0]) + 0.5).abs() < 1e-12);
    assert!((f(&d["c"]) - 0.5).abs() < 1e-12);
}

#[test]
fn synth_hinf_on_unbalanced_graph_is_precondition_error() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g", "nodes 3\n1 2\n2 3\n3 1\n1 3\n");
    let out = lipcon(&[
        "synth",
        data("manipulator.json").to_str().unwrap(),
        &g,
        "--mode",
        "hinf",
        "--cert",
        data("published_cert.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("balanced and strongly connected"));
}

#[test]
fn synth_uncontrollable_unstable_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", &scalar_model(1.0, 0.0));
    let out = lipcon(&["synth", &model, &write(&dir, "g", TWO_NODE)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_deterministic() {
    let (model, graph) = (data("manipulator.json"), data("manipulator.edges"));
    let args = ["synth", model.to_str().unwrap(), graph.to_str().unwrap(), "--mode", "hinf"];
    let (a, b) = (lipcon(&args), lipcon(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn leader_follower_synth_rejects_indefinite_h() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", &scalar_model(-1.0, 1.0));
    let g = write(&dir, "g", "nodes 4\n1 2\n3 2\n4 2\n2 3\n4 3\n3 4\n");
    let out = lipcon(&["synth", &model, &g, "--mode", "leader-follower"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not positive definite"));
}

fn simulate(extra: &[&str], dir: &Path) -> Value {
    let (model, graph, cert) = (data("manipulator.json"), data("manipulator.edges"), data("published_cert.json"));
    let mut args = vec![
        "simulate",
        model.to_str().unwrap(),
        graph.to_str().unwrap(),
        "--mode",
        "hinf",
        "--cert",
        cert.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let r = json(&lipcon(&args));
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(saved, r);
    r
}

#[test]
fn simulate_undisturbed_reaches_consensus() {
    let dir = TempDir::new().unwrap();
    let r = simulate(&["--c", "37", "--seed", "3", "--t-end", "10", "--csv-every", "50"], dir.path());
    let s = &r["runs"][0]["simulation"];
    assert!(f(&s["final_max_pairwise_distance"]) < 1e-3);
    assert_eq!(r["provenance"]["seed"], 3);
    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header.len(), 1 + 24 + 24 + 6 + 2);
    assert_eq!(rows.last().unwrap()[0], 10.0);
}

#[test]
fn simulate_identical_states_has_zero_error() {
    let dir = TempDir::new().unwrap();
    let x0 = write(&dir, "x0.json", &serde_json::to_string(&vec![vec![0.3, -0.2, 0.1, 0.05]; 6]).unwrap());
    simulate(&["--c", "37", "--x0", &x0, "--t-end", "1"], dir.path());
    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    let e_cols: Vec<usize> = (0..header.len()).filter(|&k| header[k].starts_with('e')).collect();
    assert_eq!(e_cols.len(), 24);
    for row in &rows {
        for &k in &e_cols {
            assert!(row[k].abs() < 1e-12);
        }
    }
}

#[test]
fn simulate_disturbed_zero_state_has_negative_cost() {
    let dir = TempDir::new().unwrap();
    let r = simulate(
        &["--zero-init", "--disturbance", "bipolar", "--weights", "1,-1,1.5,3,-0.6,2", "--t-end", "10"],
        dir.path(),
    );
    let s = &r["runs"][0]["simulation"];
    assert_eq!(s["zero_initial_state"], true);
    assert!(f(&s["j"]) < 0.0);
    assert!(f(&s["empirical_gain"]) < 2.0);
}

#[test]
fn simulate_blow_up_exit_code() {
    let dir = TempDir::new().unwrap();
    let model = write(&dir, "m.json", &scalar_model(30.0, 1.0));
    let cert = write(&dir, "c.json", r#"{"p": [[1.0]], "scalar": 100.0}"#);
    let out_dir = dir.path().join("out");
    let out = lipcon(&[
        "simulate",
        &model,
        &write(&dir, "g", TWO_NODE),
        "--cert",
        &cert,
        "--t-end",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("last valid time"));
}

#[test]
fn repro_writes_bundle() {
    let dir = TempDir::new().unwrap();
    let out = lipcon(&["repro", "--t-end", "3", "--csv-every", "100", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["published_undisturbed", "published_disturbed", "solver_undisturbed", "solver_disturbed"] {
        assert!(dir.path().join(format!("{name}.csv")).exists());
    }
    assert!(dir.path().join("comparison.md").exists());
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let rows = r["comparison"].as_array().unwrap();
    let row = |q: &str| rows.iter().find(|r| r["quantity"].as_str().unwrap().starts_with(q)).unwrap();
    assert_eq!(row("lambda2")["pass"], true);
    assert_eq!(row("K[4]")["pass"], true);
    for run in r["runs"].as_array().unwrap() {
        if run["name"].as_str().unwrap().ends_with("_disturbed") {
            assert!(f(&run["simulation"]["j"]) < 0.0);
        }
    }
    assert_eq!(r["provenance"]["seed"], 0);
}
