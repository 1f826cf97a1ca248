//! End-to-end tests of the command-line surface and its exit-code
//! contract: 0 success, 1 verification failure, 2 usage/input error.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riccidegen"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn p_params() -> &'static str {
    r#"{
        "beta": -1.0, "gamma": 1.0, "p0": 2.0, "p0_sign": 1.0,
        "c1_0": 1.0, "c1_prime_0": 0.0,
        "x1_interval": [0.0, 1.2], "x3_interval": [0.0, 1.5]
    }"#
}

fn qb_vstatic_params(m: f64) -> String {
    format!(
        r#"{{
            "m": {m}, "l": 0.0, "alpha": 0.0, "k_const": -1.0,
            "scalar_curvature": -6.0, "kappa": 1.0,
            "q0": 1.0, "b0": 1.0, "c0": 1.0,
            "x1_interval": [0.0, 0.6], "x3_interval": [0.0, 0.6],
            "x2_interval": [0.0, 1.0]
        }}"#
    )
}

fn construct_p(dir: &Path) -> PathBuf {
    let params = write(dir, "p.json", p_params());
    let out = dir.join("inst.json");
    let o = run(&[
        "construct",
        "--family",
        "p-cpm",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn construct_writes_instance_and_reports_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = construct_p(dir.path());
    assert!(out.exists());
    let json = std::fs::read_to_string(&out).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["format"], "riccidegen.instance.v1");
    assert_eq!(doc["family"]["family"], "p");
}

#[test]
fn construct_stdout_mentions_chart_and_drift() {
    let dir = tempfile::tempdir().unwrap();
    let params = write(dir.path(), "p.json", p_params());
    let out = dir.path().join("inst.json");
    let o = run(&[
        "construct",
        "--family",
        "p-cpm",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("chart:"));
    assert!(stdout.contains("ode drift:"));
}

#[test]
fn construct_rejects_zero_m_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let params = write(dir.path(), "q.json", &qb_vstatic_params(0.0));
    let out = dir.path().join("inst.json");
    let o = run(&[
        "construct",
        "--family",
        "qb-vstatic",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("m must be nonzero"));
}

#[test]
fn construct_missing_out_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let params = write(dir.path(), "p.json", p_params());
    let o = run(&[
        "construct",
        "--family",
        "p-cpm",
        "--params",
        params.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.to_lowercase().contains("usage") || stderr.contains("--out"));
}

#[test]
fn construct_malformed_params_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = write(dir.path(), "bad.json", r#"{"beta": -1.0}"#);
    let out = dir.path().join("inst.json");
    let o = run(&[
        "construct",
        "--family",
        "p-cpm",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn verify_passes_on_constructed_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let report = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--checks",
        "all",
        "--grid",
        "7x7x7",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["overall_pass"], true);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("equation_residual"));
}

#[test]
fn verify_corrupted_potential_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    // Hand-corrupt the potential in the instance file.
    let json = std::fs::read_to_string(&inst).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    doc["potential_scale"] = serde_json::Value::from(1.01);
    std::fs::write(&inst, serde_json::to_string(&doc).unwrap()).unwrap();

    let report = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--checks",
        "all",
        "--grid",
        "7x7x7",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    // The report is still written, with the equation check failing.
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["overall_pass"], false);
    let eq = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "equation_residual")
        .unwrap();
    assert_eq!(eq["pass"], false);
}

#[test]
fn verify_small_grid_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let report = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--grid",
        "2x2x2",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_tolerance_override() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let report = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--tolerance",
        "1e-5",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let eq = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "equation_residual")
        .unwrap();
    assert_eq!(eq["tolerance"], 1e-5);

    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--tolerance",
        "-1.0",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_unknown_check_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let report = dir.path().join("report.json");
    let o = run(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--checks",
        "equation,nonsense",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("nonsense"));
    assert!(stderr.contains("eigen-crosscheck"));
}

#[test]
fn sweep_produces_parseable_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ranges = write(
        dir.path(),
        "ranges.json",
        r#"{
            "base": {
                "m": 1.0, "l": 0.0, "alpha": 0.0, "k_const": -1.0,
                "scalar_curvature": -6.0,
                "q0": 1.0, "b0": 1.0, "c0": 1.0,
                "x1_interval": [0.0, 0.5], "x3_interval": [0.0, 0.5],
                "x2_interval": [0.0, 1.0]
            },
            "ranges": { "m": {"start": 0.5, "stop": 2.0, "count": 3} }
        }"#,
    );
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--family",
        "qb-cpm",
        "--param-ranges",
        ranges.to_str().unwrap(),
        "--grid",
        "5x5x5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "header + 3 rows:\n{csv}");
    assert_eq!(
        lines[0],
        "family,m,chart_x1,chart_x2,chart_x3,max_eq_residual,min_eigen_gap,cotton_witness,guard_note"
    );
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], "qb-cpm");
        let m: f64 = cells[1].parse().unwrap();
        assert!(m >= 0.5 && m <= 2.0);
        let resid: f64 = cells[5].parse().unwrap();
        assert!(resid <= 1e-7, "residual {resid} in row {row}");
        let gap: f64 = cells[6].parse().unwrap();
        assert!(gap > 1e-4);
        let cotton: f64 = cells[7].parse().unwrap();
        assert!(cotton >= 1e-6);
    }
}

#[test]
fn sweep_guard_hit_records_zero_chart_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    // q0 + b0 = 0 violates the q+b ≥ 0.05 guard at the base point.
    let ranges = write(
        dir.path(),
        "ranges.json",
        r#"{
            "base": {
                "m": 1.0, "l": 0.0, "alpha": 0.0, "k_const": -1.0,
                "scalar_curvature": -6.0, "kappa": 1.0,
                "q0": -0.5, "b0": 0.5, "c0": 1.0,
                "x1_interval": [0.0, 0.4], "x3_interval": [0.0, 0.4],
                "x2_interval": [0.0, 1.0]
            },
            "ranges": { "m": {"start": 1.0, "stop": 1.0, "count": 1} }
        }"#,
    );
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--family",
        "qb-vstatic",
        "--param-ranges",
        ranges.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains("guard: q_plus_b"), "row: {row}");
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[2], "0");
    assert_eq!(cells[3], "0");
    assert_eq!(cells[4], "0");
}

#[test]
fn outputs_are_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = construct_p(dir.path());
    let params = write(dir.path(), "p2.json", p_params());
    let b = dir.path().join("inst2.json");
    let o = run(&[
        "construct",
        "--family",
        "p-cpm",
        "--params",
        params.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "identical inputs must produce byte-identical instance files"
    );

    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    for r in [&r1, &r2] {
        let o = run(&[
            "verify",
            "--instance",
            a.to_str().unwrap(),
            "--report",
            r.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
}

#[test]
fn sweep_cartesian_product_of_two_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let ranges = write(
        dir.path(),
        "ranges.json",
        r#"{
            "base": {
                "beta": -1.0, "gamma": 1.0, "p0": 2.0, "p0_sign": 1.0,
                "c1_0": 1.0, "c1_prime_0": 0.0,
                "x1_interval": [0.0, 1.0], "x3_interval": [0.0, 1.0]
            },
            "ranges": {
                "p0": {"start": 1.8, "stop": 2.2, "count": 2},
                "gamma": {"start": 1.0, "stop": 1.5, "count": 2}
            }
        }"#,
    );
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--family",
        "p-cpm",
        "--param-ranges",
        ranges.to_str().unwrap(),
        "--grid",
        "4x4x4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "header + 2×2 rows:
{csv}");
    // Ranged columns in name-sorted order.
    assert!(lines[0].starts_with("family,gamma,p0,"));
    for row in &lines[1..] {
        let resid: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!(resid <= 1e-7, "row {row}");
    }
}

#[test]
fn oracle_stencil_at_chart_edge_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    // Inside the chart but closer than 2·step to its x3 boundary.
    let o = run(&[
        "oracle",
        "--instance",
        inst.to_str().unwrap(),
        "--point",
        "0.5,0.2,1.49999",
        "--step",
        "1e-3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stencil"));
}

#[test]
fn sweep_empty_ranges_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let ranges = write(
        dir.path(),
        "ranges.json",
        r#"{"base": {}, "ranges": {}}"#,
    );
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--family",
        "qb-cpm",
        "--param-ranges",
        ranges.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_interior_point_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let o = run(&[
        "oracle",
        "--instance",
        inst.to_str().unwrap(),
        "--point",
        "0.5,0.2,0.7",
        "--step",
        "1e-4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("max relative deviation"));
}

#[test]
fn oracle_coarse_step_reports_honestly() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let o = run(&[
        "oracle",
        "--instance",
        inst.to_str().unwrap(),
        "--point",
        "0.5,0.2,0.7",
        "--step",
        "1e-1",
    ]);
    // O(h²) truncation dominates at h = 0.1; the command reports the
    // deviations and signals disagreement.
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_outside_chart_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = construct_p(dir.path());
    let o = run(&[
        "oracle",
        "--instance",
        inst.to_str().unwrap(),
        "--point",
        "9.0,0.0,0.5",
        "--step",
        "1e-4",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
