use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eis_core::analysis::verify_conditions;
use eis_core::Scheme;

fn eis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verify_s2_passes_everything() {
    let o = eis(&["verify", "S2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for line in [
        "C1 PASS rank=1",
        "C2 PASS",
        "C3 PASS",
        "C4 PASS eis_residual=0",
    ] {
        assert!(out.contains(line), "{line} missing in\n{out}");
    }
}

#[test]
fn verify_butcher_reports_failure_with_exit_zero() {
    let o = eis(&["verify", "BUTCHER2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("C4 FAIL eis_residual=19/24"));
}

#[test]
fn verify_json_uses_rational_strings() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("b2.json");
    assert_eq!(
        eis(&["verify", "BUTCHER2", "--json", p(&json)])
            .status
            .code(),
        Some(0)
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["eis_residual"], "19/24");
    assert_eq!(v["leading"][0], "23/48");
    assert_eq!(v["conditions"][3]["status"], "FAIL");
}

#[test]
fn converge_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s2.csv");
    let gp = dir.path().join("s2.gp");
    let o = eis(&[
        "converge",
        "--scheme",
        "S2",
        "--problem",
        "P1",
        "--dts",
        "1/8,1/16,1/32",
        "--T",
        "1",
        "--csv",
        p(&csv),
        "--plot",
        p(&gp),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("max-norm global slope"));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
    assert!(fs::read_to_string(&gp).unwrap().contains("$data << EOD"));
}

#[test]
fn converge_needs_three_steps() {
    let o = eis(&[
        "converge",
        "--scheme",
        "S2",
        "--problem",
        "P1",
        "--dts",
        "1/8,1/16",
        "--T",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("need >=3 dt values"));
}

#[test]
fn integrate_csv_has_one_row_per_block() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("vdp.csv");
    let o = eis(&[
        "integrate",
        "--scheme",
        "S3A",
        "--problem",
        "P2",
        "--dt",
        "0.125",
        "--T",
        "1",
        "--out",
        p(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,component_0,component_1"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0], vec![0.0, 2.0, 0.0]);
    assert_eq!(rows[8][0], 1.0);
}

#[test]
fn integrate_accepts_rational_steps_and_lambda() {
    let o = eis(&[
        "integrate",
        "--scheme",
        "S2",
        "--problem",
        "P3",
        "--lambda",
        "-2",
        "--dt",
        "1/10",
        "--T",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("10 block steps"));
    assert!(stdout(&o).contains("max error vs exact solution"));
}

#[test]
fn derive_writes_a_verifiable_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s2.json");
    let o = eis(&[
        "derive",
        "--a",
        "-1/6,7/6",
        "--name",
        "again",
        "--out",
        p(&path),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("[55/24, -17/24]"));
    assert!(out.contains("eis_residual = 0"));
    let loaded = Scheme::load(&path).unwrap();
    assert_eq!(loaded.b(), Scheme::builtin("S2").unwrap().b());
    assert!(stdout(&eis(&["verify", p(&path)])).contains("C4 PASS"));
}

#[test]
fn search_writes_candidates_that_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = eis(&[
        "derive",
        "--search",
        "--range",
        "-2:2",
        "--samples",
        "50",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("-1/6 (exact)"));
    let o = eis(&[
        "search",
        "--s",
        "3",
        "--fix",
        "0=467/768",
        "--range",
        "-3:3",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("-499/192 (exact)"), "{}", stdout(&o));
    let mut found = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let scheme = Scheme::load(entry.unwrap().path()).unwrap();
        assert!(verify_conditions(&scheme).all_passed(), "{}", scheme.name());
        found += 1;
    }
    assert_eq!(found, 2);
}

#[test]
fn stability_csv_has_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rho.csv");
    let o = eis(&[
        "stability",
        "--scheme",
        "S2",
        "--re",
        "-1:1",
        "--im",
        "-1:1",
        "--n",
        "5",
        "--out",
        p(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("re,im,rho"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn truncation_lists_residuals() {
    let out = stdout(&eis(&["truncation", "S2", "--p-max", "3"]));
    assert!(out.contains("d_3 = (161/576, 23/576)"));
    assert!(out.contains("truncation order 2"));
}

#[test]
fn list_names_everything() {
    let out = stdout(&eis(&["list"]));
    for name in [
        "S2", "BUTCHER2", "S3A", "S3B", "S3C", "P1", "P2", "P3", "P4",
    ] {
        assert!(out.contains(name));
    }
}

#[test]
fn bad_scheme_file_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"name": "x", "s": 2, "c_in": ["0", "1/2"], "c_out": ["1", "3/2"], "A": [["1","0"],["1","0"]], "B": [["0","0"],["0","0"]]}"#).unwrap();
    let o = eis(&["verify", p(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not descending"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(eis(&[]).status.code(), Some(2));
    assert_eq!(eis(&["verify", "S2", "--nope"]).status.code(), Some(2));
    assert_eq!(
        eis(&[
            "integrate",
            "--scheme",
            "S2",
            "--problem",
            "P7",
            "--dt",
            "1/8",
            "--T",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(eis(&["derive", "--a", "1/2,abc"]).status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let o = eis(&["converge", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for flag in [
        "--scheme",
        "--problem",
        "--dts",
        "--T",
        "--csv",
        "--plot",
        "--lambda",
    ] {
        assert!(out.contains(flag), "{flag}");
    }
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(name);
        eis(&[
            "converge",
            "--scheme",
            "S3B",
            "--problem",
            "P2",
            "--dts",
            "1/8,1/16,1/32",
            "--T",
            "1",
            "--csv",
            p(&csv),
        ]);
        fs::read(csv).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
