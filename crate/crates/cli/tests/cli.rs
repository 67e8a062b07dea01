use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

fn adyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adyn")).args(args).env_remove("ADYN_OUTPUT_DIR").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn dot_edges(dot: &str) -> Vec<String> {
    let label = |id: &str| -> String {
        let start = dot.find(&format!("  {id} [label=\"")).unwrap() + id.len() + 11;
        dot[start..].split("\\n").next().unwrap().to_string()
    };
    dot.lines()
        .filter(|l| l.contains("->"))
        .map(|l| {
            let mut ends = l.trim().split(" [").next().unwrap().split(" -> ");
            let (a, b) = (ends.next().unwrap(), ends.next().unwrap());
            format!("{}->{}", label(a), label(b))
        })
        .collect()
}

#[test]
fn analyze_writes_example_six_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = adyn(&["analyze", fixture("ex6").to_str().unwrap(), "--levels", "1,2", "--out", out]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    for f in ["g_esc.json", "g_esc.dot", "g1.json", "g1.dot", "g2.json", "g2.dot"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let g1 = fs::read_to_string(dir.path().join("g1.dot")).unwrap();
    assert_eq!(dot_edges(&g1), ["{1}->{2}", "{2}->{3}", "{3}->{4}", "{3}->{7}", "{5}->{6}", "{7}->{2}"]);
    let g2 = fs::read_to_string(dir.path().join("g2.dot")).unwrap();
    assert_eq!(dot_edges(&g2), ["{0}->{4}", "{4}->{6}"]);
    assert!(g2.starts_with("// manifest {"));
}

#[test]
fn analysis_output_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // same manifest means the same output directory string
    for d in [&a, &b] {
        let r = Command::new(env!("CARGO_BIN_EXE_adyn"))
            .current_dir(d.path())
            .args(["analyze", fixture("ex8").to_str().unwrap(), "--levels", "2,3", "--workers", "1"])
            .env("ADYN_OUTPUT_DIR", "graphs")
            .output()
            .unwrap();
        assert!(r.status.success(), "{}", text(&r.stderr));
    }
    for f in ["g_esc.json", "g2.json", "g3.json", "g3.dot"] {
        let x = fs::read(a.path().join("graphs").join(f)).unwrap();
        let y = fs::read(b.path().join("graphs").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn trapping_cycle_is_an_assumption_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = adyn(&["analyze", fixture("ex7").to_str().unwrap(), "--levels", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let err = text(&r.stderr);
    assert!(err.contains("no-trapping") && err.contains("{2} {3} {7}"), "{err}");
}

#[test]
fn self_mutation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(
        &path,
        r#"{"vertices":["a","b"],"edges":[{"from":"a","to":"a","m":0.5},{"from":"a","to":"b","m":0.5}],
            "birth":{"a":2,"b":2},"death":{"a":1,"b":1},"competition":{"equal":1},"alpha":1.5}"#,
    )
    .unwrap();
    let r = adyn(&["validate-model", path.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(text(&r.stderr).contains("no self-mutation"), "{}", text(&r.stderr));

    let ok = adyn(&["validate-model", fixture("ex1").to_str().unwrap()]);
    assert!(ok.status.success());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(adyn(&["--bogus"]).status.code(), Some(1));
    assert_eq!(adyn(&["rates", "/nonexistent/model.json", "--resident", "0"]).status.code(), Some(1));
    assert_eq!(adyn(&["excursion", "--rho", "0.7"]).status.code(), Some(1));
    assert_eq!(adyn(&["--help"]).status.code(), Some(0));
}

#[test]
fn excursion_lambda_row() {
    let r = adyn(&["excursion", "--rho", "0.25"]);
    assert!(r.status.success());
    let out = text(&r.stdout);
    let row = out.lines().find(|l| l.starts_with("lambda,")).unwrap();
    let lambda: f64 = row[7..].parse().unwrap();
    assert!((lambda - 0.5).abs() < 1e-10, "{row}");
    assert!(out.lines().nth(1) == Some("k,pmf"));
}

#[test]
fn rates_report_per_path_breakdown() {
    let r = adyn(&["rates", fixture("ex2").to_str().unwrap(), "--resident", "0"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["per_trait"][0]["paths"].as_array().unwrap().len(), 2);
    assert!(v["exit_rate"].as_f64().unwrap() > 0.0);
    assert_eq!(v["manifest"]["command"], "rates");
}

#[test]
fn simulate_is_reproducible_and_prints_generated_seed() {
    let runs: Vec<(String, String)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let r = Command::new(env!("CARGO_BIN_EXE_adyn"))
                .current_dir(dir.path())
                .args(["simulate", fixture("ex1").to_str().unwrap(), "--k", "200", "--resident", "0"])
                .args(["--seed", "5", "--horizon", "5", "--stride", "10", "--out", "run"])
                .output()
                .unwrap();
            assert!(r.status.success(), "{}", text(&r.stderr));
            let csv = fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
            let json = fs::read_to_string(dir.path().join("run/record.json")).unwrap();
            (csv, json)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].0.lines().nth(1).unwrap().starts_with("t,0,1a"));

    let dir = tempfile::tempdir().unwrap();
    let r = adyn(&[
        "simulate",
        fixture("ex1").to_str().unwrap(),
        "--k",
        "100",
        "--resident",
        "0",
        "--horizon",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let seed_line = text(&r.stderr);
    let seed: u64 = seed_line.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(record["manifest"]["seed"], seed);
}

#[test]
fn lnk_writes_breakpoints() {
    let dir = tempfile::tempdir().unwrap();
    let r = adyn(&["lnk", fixture("invasion").to_str().unwrap(), "--beta", "1,0.5", "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let csv = fs::read_to_string(dir.path().join("lnk.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows, ["t,0,1", "0,1,0.5", "0.5,1,1", "1.5,0,1"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("lnk.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"]["kind"], "esc_reached");
}

fn single_path_model(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("path.json");
    fs::write(
        &path,
        r#"{"vertices":["0","1","2"],"edges":[{"from":"0","to":"1","m":1},{"from":"1","to":"2","m":1}],
            "birth":{"0":2,"1":1,"2":20},"death":{"0":1,"1":1.5,"2":0},
            "competition":{"equal":1},"alpha":1.5}"#,
    )
    .unwrap();
    path
}

#[test]
fn montecarlo_strict_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let model = single_path_model(dir.path());
    let out = dir.path().join("mc");
    let base = [
        "montecarlo",
        model.to_str().unwrap(),
        "--resident",
        "0",
        "--k",
        "200",
        "--replicates",
        "100",
        "--seed",
        "3",
        "--workers",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    let r = adyn(&base);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"][0]["split"][0]["frequency"], 1.0);
    assert!(out.join("times_k200.csv").exists());

    // an impossible tolerance must trip --strict
    let mut strict = base.to_vec();
    strict.extend(["--mean-tolerance", "0", "--strict"]);
    let r = adyn(&strict);
    assert_eq!(r.status.code(), Some(2), "{}", text(&r.stderr));
}

#[test]
fn jump_chain_and_export() {
    let r = adyn(&["jump-chain", fixture("ex8").to_str().unwrap(), "--from", "0", "--seed", "1"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    let to: Vec<&str> = v["steps"].as_array().unwrap().iter().map(|s| s["to"].as_str().unwrap()).collect();
    assert_eq!(to, ["{3}", "{5}", "{8}"]);

    let r = adyn(&["export-dot", fixture("ex9").to_str().unwrap(), "--level", "3"]);
    assert!(r.status.success());
    assert_eq!(dot_edges(&text(&r.stdout)), ["{0}->{5}"]);
}
