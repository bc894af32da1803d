use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fusplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusplace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fusplace(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn json(path: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let (g, c, cg) = (
        p(d.path(), "g.json"),
        p(d.path(), "c.json"),
        p(d.path(), "cg.json"),
    );
    let out = ok(&[
        "gen",
        "--depth",
        "6",
        "--width",
        "1",
        "--density",
        "1",
        "--devices",
        "1,2",
        "--seed",
        "3",
        "--out",
        &g,
        "--cluster-out",
        &c,
    ]);
    assert!(out.contains("6 operators"));
    assert!(ok(&["coarsen", "--graph", &g, "--out", &cg]).contains("6 operators -> 2"));
    let coarse = json(&cg);
    assert_eq!(coarse["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(coarse["nodes"][0]["op_type"], "conv∘bn∘relu");

    let (pl, tr) = (p(d.path(), "p.json"), p(d.path(), "t.json"));
    for method in ["exact", "etf", "sct"] {
        ok(&[
            "place",
            "--graph",
            &cg,
            "--cluster",
            &c,
            "--method",
            method,
            "--out",
            &pl,
        ]);
        let placement = json(&pl);
        assert_eq!(placement["assignments"].as_array().unwrap().len(), 2);
        ok(&[
            "simulate",
            "--graph",
            &cg,
            "--cluster",
            &c,
            "--placement",
            &pl,
            "--out",
            &tr,
        ]);
        let trace = json(&tr);
        assert_eq!(trace["makespan_s"], placement["makespan_s"]);
        assert!(!trace["events"].as_array().unwrap().is_empty());
    }

    let lp = p(d.path(), "m.lp");
    ok(&["export-lp", "--graph", &cg, "--cluster", &c, "--out", &lp]);
    let first = fs::read(&lp).unwrap();
    ok(&["export-lp", "--graph", &cg, "--cluster", &c, "--out", &lp]);
    assert_eq!(first, fs::read(&lp).unwrap());
    assert!(String::from_utf8(first)
        .unwrap()
        .starts_with("\\ makespan-minimal placement\nMinimize\n obj: T\n"));
}

#[test]
fn budgeted_exact_search() {
    let d = tempfile::tempdir().unwrap();
    let (g, c, pl) = (
        p(d.path(), "g.json"),
        p(d.path(), "c.json"),
        p(d.path(), "p.json"),
    );
    ok(&[
        "gen",
        "--depth",
        "5",
        "--width",
        "3",
        "--edge-prob",
        "0.3",
        "--devices",
        "1,2,3",
        "--seed",
        "11",
        "--out",
        &g,
        "--cluster-out",
        &c,
    ]);
    let out = ok(&[
        "place",
        "--graph",
        &g,
        "--cluster",
        &c,
        "--budget",
        "200ms",
        "--gap",
        "0.05",
        "--node-limit",
        "5000",
        "--out",
        &pl,
    ]);
    assert!(out.starts_with("exact: makespan"));
}

#[test]
fn tampered_schedule_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let (g, c, pl, tr) = (
        p(d.path(), "g.json"),
        p(d.path(), "c.json"),
        p(d.path(), "p.json"),
        p(d.path(), "t.json"),
    );
    ok(&[
        "gen",
        "--depth",
        "3",
        "--width",
        "2",
        "--devices",
        "1,2",
        "--seed",
        "1",
        "--out",
        &g,
        "--cluster-out",
        &c,
    ]);
    ok(&["place", "--graph", &g, "--cluster", &c, "--out", &pl]);
    let mut placement = json(&pl);
    // shorten the first operator so its duration no longer matches its profile
    let end = placement["schedule"][0]["end_s"].as_f64().unwrap();
    placement["schedule"][0]["end_s"] = serde_json::json!(end / 2.0);
    fs::write(&pl, serde_json::to_string(&placement).unwrap()).unwrap();
    let out = fusplace(&[
        "simulate",
        "--graph",
        &g,
        "--cluster",
        &c,
        "--placement",
        &pl,
        "--out",
        &tr,
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DurationMismatch"));
}

#[test]
fn bad_inputs_fail() {
    let d = tempfile::tempdir().unwrap();
    let g = p(d.path(), "g.json");
    fs::write(&g, r#"{"nodes":[{"id":1,"op_type":"a","mem_bytes":1,"compute_time":{"1":1.0}},{"id":2,"op_type":"b","mem_bytes":1,"compute_time":{"1":1.0}}],"edges":[{"src":1,"dst":2,"payload_bytes":1},{"src":2,"dst":1,"payload_bytes":1}]}"#).unwrap();
    let out = fusplace(&["coarsen", "--graph", &g, "--out", &p(d.path(), "o.json")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));

    assert!(!fusplace(&[
        "coarsen",
        "--graph",
        &p(d.path(), "missing.json"),
        "--out",
        &g
    ])
    .status
    .success());
    assert!(
        !fusplace(&["gen", "--depth", "0", "--width", "1", "--seed", "1", "--out", &g])
            .status
            .success()
    );
    assert!(
        !fusplace(&["gen", "--depth", "2", "--width", "1", "--out", &g])
            .status
            .success(),
        "seed is mandatory"
    );
    let c = p(d.path(), "c.json");
    ok(&[
        "gen",
        "--depth",
        "2",
        "--width",
        "1",
        "--seed",
        "1",
        "--out",
        &g,
        "--cluster-out",
        &c,
    ]);
    assert!(!fusplace(&[
        "place",
        "--graph",
        &g,
        "--cluster",
        &c,
        "--gap",
        "1.5",
        "--out",
        &g
    ])
    .status
    .success());
}

#[test]
fn bench_writes_reports() {
    let d = tempfile::tempdir().unwrap();
    let c = p(d.path(), "c.json");
    let g = p(d.path(), "g.json");
    ok(&[
        "gen",
        "--depth",
        "3",
        "--width",
        "2",
        "--devices",
        "1,2",
        "--seed",
        "2",
        "--out",
        &g,
        "--cluster-out",
        &c,
    ]);
    let config = serde_json::json!({
        "graphs": [
            {"kind": "file", "path": "g.json"},
            {"kind": "synthetic", "name": "chain", "spec": {"depth": 6, "width": 1, "density": 1.0, "devices": [1, 2]}, "seed": 4}
        ],
        "cluster": "c.json",
        "methods": ["exact", "etf", "sct"],
        "repeats": 1,
        "out_dir": "out"
    });
    let cfg = p(d.path(), "bench.json");
    fs::write(&cfg, config.to_string()).unwrap();
    assert!(ok(&["bench", "--config", &cfg]).contains("12 cells"));
    let csv = fs::read_to_string(d.path().join("out/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .starts_with("graph,variant,method,"));
    for f in ["report.json", "latency.dat", "gen_time.dat"] {
        assert!(d.path().join("out").join(f).exists(), "{f}");
    }
    let report = json(&p(d.path(), "out/report.json"));
    for row in report["rows"].as_array().unwrap() {
        assert!(row["error"].is_null());
        assert_eq!(row["makespan_s"], row["sim_makespan_s"]);
    }
}
