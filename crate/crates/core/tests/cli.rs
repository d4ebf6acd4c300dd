use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use snpl::harness::{self, RunConfig};
use snpl::synthetic;

fn snpl_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snpl")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_synthetic(dir: &Path, n: usize, seed: u64) -> String {
    let ds = synthetic::generate(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let path = dir.join("data.csv");
    harness::write_dataset_file(&ds, &path, false).unwrap();
    path.to_str().unwrap().to_string()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const BONFERRONI: &str = r#"{
  "schema_version": 1,
  "method": "bonferroni",
  "propensity": [0.5, 0.5],
  "policies": {"synthetic-grid": 10},
  "hyper": {"n_sim": 5000, "seed": 3}
}"#;

#[test]
fn run_returns_a_policy_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = write_synthetic(dir.path(), 4000, 12);
    let cfg = write_config(dir.path(), "c.json", BONFERRONI);
    let out = dir.path().join("trace.json");
    let o = snpl_cmd(&["run", "--data", &data, "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = std::fs::read_to_string(&out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["method"], "bonferroni");
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), v["decision"]["policy_id"].as_str().unwrap());

    // the same file through the library gives the identical trace
    let config: RunConfig = serde_json::from_str(BONFERRONI).unwrap();
    let trace = harness::run_single(Path::new(&data), &config).unwrap();
    assert_eq!(trace.to_json(), text);
}

#[test]
fn run_exits_3_on_baseline_fallback() {
    let dir = TempDir::new().unwrap();
    let data = write_synthetic(dir.path(), 500, 1);
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
  "schema_version": 1,
  "method": "snpl",
  "propensity": [0.5, 0.5],
  "policies": {"rules": [{"type": "threshold", "feature": "g1", "cutoff": 0.5, "id": "baseline"}]}
}"#,
    );
    let out = dir.path().join("t.json");
    let o = snpl_cmd(&["run", "--data", &data, "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["method"], "snpl");
    assert_eq!(v["decision"]["policy_id"], "baseline");
}

#[test]
fn schema_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", BONFERRONI);
    let out = dir.path().join("t.json");
    let out = out.to_str().unwrap();

    let no_action = dir.path().join("bad.csv");
    std::fs::write(&no_action, "x1,x2,x3,y1,y2\n0.1,0.2,0.3,1,0\n").unwrap();
    let o = snpl_cmd(&["run", "--data", no_action.to_str().unwrap(), "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`a`"));

    let data = write_synthetic(dir.path(), 200, 2);
    let bad_w = write_config(
        dir.path(),
        "w.json",
        r#"{"schema_version": 1, "propensity": [0.5, 0.5], "spec": {"guardrails": [1, 2], "weights": [0.0]}}"#,
    );
    assert_eq!(code(&snpl_cmd(&["run", "--data", &data, "--config", &bad_w, "--out", out])), 2);

    let unknown = write_config(dir.path(), "u.json", r#"{"schema_version": 1, "methd": "snpl"}"#);
    assert_eq!(code(&snpl_cmd(&["run", "--data", &data, "--config", &unknown, "--out", out])), 2);

    let version = write_config(dir.path(), "v.json", r#"{"schema_version": 7}"#);
    assert_eq!(code(&snpl_cmd(&["run", "--data", &data, "--config", &version, "--out", out])), 2);
}

#[test]
fn gamma_grid_format() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("g.csv");
    let o = snpl_cmd(&["gamma-grid", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,gamma,ratio"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 50 * 80);
    for r in &rows {
        assert_eq!(r.len(), 3);
        assert!(r[2] > 0.0 && r[2] < 1.0);
        for v in r {
            // at most 6 significant digits
            let digits: String = format!("{v:e}").split('e').next().unwrap().replace(['.', '-'], "");
            assert!(digits.len() <= 6, "{v}");
        }
    }
    assert_eq!(rows[0][0], 0.01);
    assert_eq!(rows.last().unwrap()[0], 0.5);
    assert_eq!(rows.last().unwrap()[1], 0.8);

    let small = dir.path().join("s.csv");
    let o = snpl_cmd(&["gamma-grid", "--out", small.to_str().unwrap(), "--alpha-steps", "2", "--gamma-steps", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(&small).unwrap().lines().count(), 7);
}

#[test]
fn simulate_writes_outputs_independent_of_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{
  "schema_version": 1,
  "methods": ["snpl", "ds-50", "bonferroni"],
  "n": 400,
  "replications": 6,
  "grid_size": 5,
  "hyper": {"n_sim": 2000},
  "seed": 9,
  "write_traces": true
}"#,
    );
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_snpl"))
            .args(["simulate", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("SNPL_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
        assert!(report.starts_with("method,detection,detection_se,type1,type1_se,ei,ei_se,reps\n"));
        assert_eq!(report.lines().count(), 4);
        let truth = std::fs::read_to_string(out.join("truth.csv")).unwrap();
        assert!(truth.starts_with("policy_id,v1,v2,safe\n"));
        assert_eq!(truth.lines().count(), 26);
        let data = std::fs::read_to_string(out.join("data_rep0.csv")).unwrap();
        assert!(data.starts_with("x1,x2,x3,a,y1,y2\n"));
        assert_eq!(data.lines().count(), 401);
        assert_eq!(std::fs::read_dir(out.join("traces")).unwrap().count(), 18);
        reports.push(report);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bounds_scatter_output() {
    let dir = TempDir::new().unwrap();
    let data = write_synthetic(dir.path(), 1500, 4);
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "propensity": [0.5, 0.5], "policies": {"synthetic-grid": 8}, "hyper": {"n_sim": 3000}}"#,
    );
    let out = dir.path().join("s.csv");
    let o = snpl_cmd(&["bounds-scatter", "--data", &data, "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("policy_id,rel1,rel2,bound1,bound2,certified,pruned,selected,pruned_size,source\n"));
    assert_eq!(text.lines().count(), 1 + 1 + 40);
}
