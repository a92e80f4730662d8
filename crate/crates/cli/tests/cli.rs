use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kecausal_cli::{execute, CliError, Report, RunConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

fn kecausal(dir: &Path, sub: &str, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join(format!("{sub}-{}.json", config.to_string().len()));
    std::fs::write(&path, config.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kecausal"))
        .arg(sub)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path, sub: &str, config: &Value) -> Value {
    let out = dir.join(format!("report-{sub}.json"));
    let o = kecausal(dir, sub, config, &["--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, kind: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("{kind}.csv"));
    report(
        dir,
        "simulate",
        &json!({"input": {"scenario": {"kind": kind}, "n": n}, "task": {"kind": "simulate", "path": path}, "seed": seed}),
    );
    path
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = TempDir::new().unwrap();
    let path = simulate(dir.path(), "backdoor_discrete", 100, 1);
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,t,y"));
    assert_eq!(lines.count(), 100);
}

#[test]
fn scenario_estimates_carry_oracle_comparison() {
    let dir = TempDir::new().unwrap();
    let r = report(
        dir.path(),
        "estimate",
        &json!({"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 500},
                "task": {"kind": "estimate", "estimator": "backdoor", "y_grid": [0.0, 1.0]}, "seed": 3}),
    );
    let estimates = r["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 2);
    for e in estimates {
        let t = e["t"].as_f64().unwrap();
        assert!((e["oracle_ate"].as_f64().unwrap() - (0.3 + 0.5 * t)).abs() < 1e-12);
        let err = e["abs_error"].as_f64().unwrap();
        assert!((err - (e["ate"].as_f64().unwrap() - e["oracle_ate"].as_f64().unwrap()).abs()).abs() < 1e-15);
        assert_eq!(e["ime"].as_array().unwrap().len(), 2);
    }
    assert!(r["contrast"]["oracle"].as_f64().unwrap() - 0.5 < 1e-12);
    let resolved = &r["config"]["estimator"];
    assert!(resolved["lambda"].as_f64().unwrap() > 0.0);
    assert!(resolved["kernels"].as_object().unwrap().len() >= 3);
    for key in ["load_ms", "task_ms", "total_ms"] {
        assert!(r["timings"][key].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(r["schema_version"], 1);
    assert!(r["benchmark"].is_null() && r["tests"].is_null());
}

#[test]
fn csv_round_trip_matches_scenario_run() {
    let dir = TempDir::new().unwrap();
    for (kind, estimator) in [("backdoor_discrete", "backdoor"), ("proxy_discrete", "proxy"), ("instrument_linear", "instrument")] {
        let seed = 5;
        let path = simulate(dir.path(), kind, 300, seed);
        let from_scenario = report(
            dir.path(),
            "estimate",
            &json!({"input": {"scenario": {"kind": kind}, "n": 300},
                    "task": {"kind": "estimate", "estimator": estimator, "treatments": [0.0, 1.0]}, "seed": seed}),
        );
        let from_csv = report(
            dir.path(),
            "estimate",
            &json!({"input": {"csv_path": path},
                    "task": {"kind": "estimate", "estimator": estimator, "treatments": [0.0, 1.0]}, "seed": seed}),
        );
        for (a, b) in from_scenario["estimates"].as_array().unwrap().iter().zip(from_csv["estimates"].as_array().unwrap()) {
            let (a, b) = (a["ate"].as_f64().unwrap(), b["ate"].as_f64().unwrap());
            assert!((a - b).abs() <= 1e-12, "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn fusion_round_trip_through_two_files() {
    let dir = TempDir::new().unwrap();
    let base = simulate(dir.path(), "fusion_discrete", 400, 8);
    let (d1, d2) = kecausal_cli::fusion_paths(&base);
    assert_eq!(std::fs::read_to_string(&d1).unwrap().lines().next(), Some("s,y"));
    assert_eq!(std::fs::read_to_string(&d2).unwrap().lines().next(), Some("x,t,s"));
    let task = json!({"kind": "estimate", "estimator": "fusion", "treatments": [0.0, 1.0]});
    let a = report(
        dir.path(),
        "estimate",
        &json!({"input": {"scenario": {"kind": "fusion_discrete"}, "n": 400}, "task": task, "seed": 8}),
    );
    let b = report(
        dir.path(),
        "estimate",
        &json!({"input": {"csv_path": d1, "csv_path_d2": d2}, "task": task, "seed": 8}),
    );
    assert_eq!(b["rows"]["n_d2"], 400);
    for (x, y) in a["estimates"].as_array().unwrap().iter().zip(b["estimates"].as_array().unwrap()) {
        assert!((x["ate"].as_f64().unwrap() - y["ate"].as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn malformed_csv_exits_3_with_position() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x,t,y\n0,1,1\n1,0,abc\n").unwrap();
    let o = kecausal(
        dir.path(),
        "estimate",
        &json!({"input": {"csv_path": path}, "task": {"kind": "estimate", "estimator": "backdoor"}}),
        &[],
    );
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("row 3") && msg.contains("column 3"), "{msg}");
}

#[test]
fn missing_value_and_non_integer_exit_3() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("gap.csv");
    std::fs::write(&path, "x,t,y\n0,1,\n").unwrap();
    let cfg = json!({"input": {"csv_path": path}, "task": {"kind": "estimate", "estimator": "backdoor"}});
    assert_eq!(kecausal(dir.path(), "estimate", &cfg, &[]).status.code(), Some(3));

    let path = dir.path().join("frac.csv");
    std::fs::write(&path, "x,t,y\n0,1,1\n0.5,0,1\n").unwrap();
    let cfg = json!({"input": {"csv_path": path, "column_types": {"x": "integer"}},
                     "task": {"kind": "estimate", "estimator": "backdoor"}});
    let o = kecausal(dir.path(), "estimate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("row 3, column 1"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (json!({"input": {"scenario": {"kind": "backdoor_discrete"}}, "task": {"kind": "estimate", "estimator": "backdoor"}}), "input.n"),
        (json!({"input": {"csv_path": "a.csv", "role_map": {"x": ["x"], "y": ["y"]}}, "task": {"kind": "estimate", "estimator": "backdoor"}}), "input.role_map"),
        (json!({"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 10, "csv_path": "a.csv"}, "task": {"kind": "estimate", "estimator": "backdoor"}}), "input"),
        (json!({"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 10}, "task": {"kind": "estimate", "estimator": "fusion"}}), "task.estimator"),
        (json!({"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 10}, "task": {"kind": "estimate", "estimator": "backdoor"}, "estimator": {"lambda": -1.0}}), "estimator"),
    ];
    for (cfg, field) in cases {
        let o = kecausal(dir.path(), "estimate", &cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{cfg}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
    let cfg = json!({"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 10}, "task": {"kind": "estimate", "estimator": "backdoor"}});
    let o = kecausal(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task.kind"));
    let o = Command::new(env!("CARGO_BIN_EXE_kecausal"))
        .args(["estimate", "--config", dir.path().join("absent.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_map_to_exit_4() {
    let e: CliError = kecausal::Error::IllConditioned {
        context: "conditional mean operator".into(),
    }
    .into();
    assert_eq!(e.exit_code(), 4);
    assert!(e.to_string().contains("conditional mean operator"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"input": {"scenario": {"kind": "backdoor_linear"}, "n": 200},
                     "task": {"kind": "estimate", "estimator": "backdoor", "treatments": [0.0, 1.0]}, "seed": 1});
    let out = dir.path().join("seeded.json");
    let o = kecausal(dir.path(), "estimate", &cfg, &["--seed", "2", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(r["config"]["seed"], 2);
    let again = report(dir.path(), "estimate", &json!({"input": cfg["input"], "task": cfg["task"], "seed": 2}));
    assert_eq!(r["estimates"], again["estimates"]);
}

#[test]
fn tests_report_p_values() {
    let dir = TempDir::new().unwrap();
    for (kind, test) in [("null_no_effect", "backdoor_hsic"), ("backdoor_discrete", "mmd"), ("backdoor_linear", "hsic")] {
        let r = report(
            dir.path(),
            "test",
            &json!({"input": {"scenario": {"kind": kind}, "n": 120}, "task": {"kind": "test", "test": test, "permutations": 100}, "seed": 4}),
        );
        let rec = &r["tests"][0];
        assert_eq!(rec["kind"], test);
        let p = rec["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0);
        assert_eq!(rec["rejects_at_0_05"], p < 0.05);
    }
}

fn benchmark_config(n: Vec<usize>, seeds: usize) -> RunConfig {
    RunConfig::from_json(
        &json!({"input": {"scenario": {"kind": "backdoor_discrete"}},
                "task": {"kind": "benchmark", "estimator": "backdoor", "n": n, "seeds": seeds}, "seed": 7})
        .to_string(),
    )
    .unwrap()
}

fn strip_timings(mut r: Report) -> Report {
    r.timings = Default::default();
    r
}

#[test]
fn benchmark_median_error_shrinks_with_n() {
    let r = execute(&benchmark_config(vec![500, 2000], 20)).unwrap();
    let b = r.benchmark.unwrap();
    assert_eq!(b.rows.len(), 2);
    assert!(b.rows[1].median <= b.rows[0].median, "{} vs {}", b.rows[1].median, b.rows[0].median);
    assert!(b.monotone);
    assert_eq!(b.rows[0].seeds, (7..27).collect::<Vec<u64>>());
}

#[test]
fn single_replicate_benchmark_has_zero_iqr_and_is_deterministic() {
    let cfg = benchmark_config(vec![300], 1);
    let a = strip_timings(execute(&cfg).unwrap());
    let row = &a.benchmark.as_ref().unwrap().rows[0];
    assert_eq!(row.iqr, 0.0);
    assert_eq!(row.median, row.errors[0]);
    let b = strip_timings(execute(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
