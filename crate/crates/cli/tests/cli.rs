use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[generator]
n_sections = 4
duration_range = [6.0, 8.0]
seed = 3

[experiment]
n_sets = 2
test_fraction = 0.25

[experiment.de]
population_size = 6
max_generations = 2
"#;

const SILENT: &str = r#"
[generator]
n_sections = 2
duration_range = [5.0, 6.0]
seed = 4

[generator.noise]
lateral_sigma = 0.0
heading_sigma = 0.0
curvature_sigma = 0.0
"#;

fn lanetune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanetune"))
        .args(args)
        .env("RAYON_NUM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lanetune(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, config).unwrap();
    let ds = dir.path().join("ds.json");
    ok(&["generate", "--config", s(&cfg), "--out", s(&ds)]);
    (dir, cfg, ds)
}

const DCFP: &str = "15,2e4,1.5e6,2.5e5,2.5e4";

#[test]
fn generate_is_deterministic() {
    let (dir, cfg, ds) = setup(SMALL);
    let again = dir.path().join("again.json");
    ok(&["generate", "--config", s(&cfg), "--out", s(&again)]);
    assert_eq!(fs::read(&ds).unwrap(), fs::read(&again).unwrap());
    let other = dir.path().join("other.json");
    ok(&["generate", "--config", s(&cfg), "--seed", "9", "--out", s(&other)]);
    assert_ne!(fs::read(&ds).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let missing = dir.path().join("nope.toml");
    assert_eq!(lanetune(&["generate", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(lanetune(&["frobnicate"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[generator]\nn_sections = 0\n").unwrap();
    assert_eq!(lanetune(&["generate", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));

    let (dir, cfg, ds) = setup(SMALL);
    let csv = dir.path().join("t.csv");
    let r = lanetune(&[
        "trace", "--config", s(&cfg), "--dataset", s(&ds), "--section", "missing", "--dcfp", DCFP, "--out", s(&csv),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing"));
    let r = lanetune(&["evaluate", "--dataset", s(&ds), "--dcfp", "1,2,3"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_3() {
    let (dir, cfg, ds) = setup(SMALL);
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, format!("{}\n[experiment.sim.qp]\nmax_iter = 1\ntol_kkt = 1e-300\n", fs::read_to_string(&cfg).unwrap())).unwrap();
    let csv = dir.path().join("t.csv");
    let r = lanetune(&[
        "trace", "--config", s(&strict), "--dataset", s(&ds), "--section", "sec000", "--dcfp", DCFP, "--out", s(&csv),
    ]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn tune_report_respects_the_search_box() {
    let (dir, cfg, ds) = setup(SMALL);
    let rep = dir.path().join("tune.json");
    ok(&["tune", "--config", s(&cfg), "--dataset", s(&ds), "--dcfp", DCFP, "--seed", "2", "--out", s(&rep)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&rep).unwrap()).unwrap();
    let cfp = &v["best_cfp"];
    let lambda = cfp["lambda"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&lambda));
    let w: Vec<f64> = cfp["theta0"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(w[4], 1.0);
    assert!(w.iter().all(|x| (1e-8..=1e8).contains(x)));
    assert!(v["best_cost"].as_f64().unwrap() <= v["seed_cost"].as_f64().unwrap());
    assert!(v.get("wall_time_s").is_none());

    let table = dir.path().join("eval.json");
    ok(&["evaluate", "--config", s(&cfg), "--dataset", s(&ds), "--report", s(&rep), "--split", "train", "--out", s(&table)]);
    let t: serde_json::Value = serde_json::from_slice(&fs::read(&table).unwrap()).unwrap();
    assert_eq!(t["candidate_total"].as_f64(), v["best_cost"].as_f64());
}

#[test]
fn evaluating_the_baseline_gives_no_change() {
    let (dir, cfg, ds) = setup(SMALL);
    let table = dir.path().join("eval.json");
    let stdout = ok(&[
        "evaluate", "--config", s(&cfg), "--dataset", s(&ds), "--dcfp", DCFP, "--split", "all", "--out", s(&table),
    ]);
    assert!(stdout.contains("relative change +0.000 %"));
    let t: serde_json::Value = serde_json::from_slice(&fs::read(&table).unwrap()).unwrap();
    let per: f64 = t["candidate"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    let total = t["candidate_total"].as_f64().unwrap();
    assert!((per - total).abs() <= 1e-12 * total);
    assert_eq!(t["relative_change_pct"].as_f64(), Some(0.0));
    assert_eq!(t["sections"].as_array().unwrap().len(), 4);
}

#[test]
fn trace_of_a_noiseless_section() {
    let (dir, cfg, ds) = setup(SILENT);
    let csv = dir.path().join("trace.csv");
    ok(&["trace", "--config", s(&cfg), "--dataset", s(&ds), "--section", "sec000", "--dcfp", DCFP, "--out", s(&csv)]);
    assert!(dir.path().join("trace.plot.json").exists());
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (ui, ci) = (
        header.iter().position(|h| *h == "u").unwrap(),
        header.iter().position(|h| *h == "stage_cost").unwrap(),
    );
    let mut total = 0.0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if !f[ui].is_empty() {
            assert!(f[ui].parse::<f64>().unwrap().abs() <= 0.02);
        }
        total += f[ci].parse::<f64>().unwrap();
    }
    let table = dir.path().join("eval.json");
    ok(&["evaluate", "--config", s(&cfg), "--dataset", s(&ds), "--dcfp", DCFP, "--split", "all", "--out", s(&table)]);
    let t: serde_json::Value = serde_json::from_slice(&fs::read(&table).unwrap()).unwrap();
    let sec0 = t["baseline"][0].as_f64().unwrap();
    assert!((total - sec0).abs() <= 1e-9 * sec0.max(1e-12), "{total} vs {sec0}");
}

#[test]
fn experiment_is_reproducible() {
    let (dir, cfg, ds) = setup(SMALL);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let stdout = ok(&["experiment", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&a)]);
    ok(&["experiment", "--config", s(&cfg), "--dataset", s(&ds), "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(stdout.contains("mean relative change on test"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}
