use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adaptest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptest")).args(args).output().unwrap()
}

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bank_validate_exit_codes() {
    let ok = adaptest(&["bank", "validate", &data("banks/applied-computing-3.json")]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("ok (23 items"), "{}", stdout(&ok));

    let dir = tempfile::tempdir().unwrap();
    let mut bank: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data("banks/applied-computing-3.json")).unwrap()).unwrap();
    bank["items"][0]["choice"]["correct_index"] = 5.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, bank.to_string()).unwrap();
    let o = adaptest(&["bank", "validate", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("ac-l1-ma1"), "{}", stdout(&o));

    let o = adaptest(&["bank", "validate", &data("banks/applied-computing-3.json"), "--levels", "4"]);
    assert_eq!(o.status.code(), Some(1));

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{").unwrap();
    assert_eq!(adaptest(&["bank", "validate", path(&garbage)]).status.code(), Some(1));
    assert_eq!(adaptest(&["bank", "validate", "/no/such/bank.json"]).status.code(), Some(2));
    assert_eq!(adaptest(&["bank"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let out = dir.path().join(out);
        let scenario = data("water-treatment-stages.toml");
        let mut args = vec!["simulate", scenario.as_str(), "--out", path(&out)];
        args.extend_from_slice(extra);
        let o = adaptest(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("stage-3:"));
        std::fs::read(out.join("stage-3.summary.csv")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "9"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn simulate_reports_schema_errors_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("applied-computing-2017.toml")).unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, text.replacen("size = 73", "size = 0", 1)).unwrap();
    let o = adaptest(&["simulate", path(&scenario), "--out", path(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cohorts[0].size"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = adaptest(&["simulate", "/no/such.toml", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_paired_activity_on_bundled_stages() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let table = dir.path().join("pairs.csv");
    let o = adaptest(&[
        "analyze",
        &data("water-treatment-planned/stage-2"),
        &data("water-treatment-planned/stage-3.summary.csv"),
        "--metric",
        "active-days",
        "--paired",
        "--json",
        path(&json),
        "--table",
        path(&table),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("15.5"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["reports"][0]["omnibus"]["statistic"], 15.5);
    assert_eq!(report["reports"][0]["paired_detail"]["critical_one_sided"], 25);
    assert!(std::fs::read_to_string(&table).unwrap().lines().count() >= 2);
}

#[test]
fn analyze_proportion_and_usage_errors() {
    let stages = [data("water-treatment-planned/stage-2"), data("water-treatment-planned/stage-3")];
    let o = adaptest(&["analyze", &stages[0], &stages[1], "--metric", "proportion", "--pass-mark", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    // 4/13 against 13/19 with the pooled standard error
    let (p1, p2, pooled): (f64, f64, f64) = (4.0 / 13.0, 13.0 / 19.0, 17.0 / 32.0);
    let z = (p1 - p2) / (pooled * (1.0 - pooled) * (1.0 / 13.0 + 1.0 / 19.0)).sqrt();
    assert!(text.contains(&format!("{z:.4}")), "{text}");

    let o = adaptest(&["analyze", &stages[0], &stages[1], "--metric", "proportion", "--pass-mark", "9.5"]);
    assert_eq!(o.status.code(), Some(1), "nobody passes, so z is undefined");

    let o = adaptest(&["analyze", &stages[0], "--metric", "speed"]);
    assert_eq!(o.status.code(), Some(2));
    let o = adaptest(&["analyze", &stages[0], "--split", "whenever"]);
    assert_eq!(o.status.code(), Some(2));
    let o = adaptest(&["analyze", "/no/such/prefix"]);
    assert_eq!(o.status.code(), Some(2));
    let o = adaptest(&["analyze", &stages[0]]);
    assert_eq!(o.status.code(), Some(1), "a single unsplit cohort has nothing to compare");
}

#[test]
fn analyze_period_split_across_simulated_cohorts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = adaptest(&["simulate", &data("applied-computing-cohorts.toml"), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let prefixes: Vec<String> =
        ["2017-2018", "2018-2019", "2019-2020"].iter().map(|c| path(&out.join(c)).to_string()).collect();
    let mut args = vec!["analyze"];
    args.extend(prefixes.iter().map(String::as_str));
    args.extend(["--split", "pre/post 03-11"]);
    let o = adaptest(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for c in ["2017-2018", "2018-2019", "2019-2020"] {
        assert!(text.contains(&format!("{c} pre")) && text.contains(&format!("{c} post")), "{text}");
    }
}

#[test]
fn export_round_trips_a_store() {
    use adaptest_core::scenario::{simulate_scenario, Scenario};
    use adaptest_core::store::{export_csv, AttemptStore};

    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("water-treatment-planned.toml")).unwrap();
    let datasets = simulate_scenario(&Scenario::from_toml(&text).unwrap(), Path::new(&data(""))).unwrap();
    let store_path: PathBuf = dir.path().join("store.jsonl");
    let store = AttemptStore::open(&store_path).unwrap();
    for d in &datasets {
        for r in &d.attempts {
            store.append(r.clone()).unwrap();
        }
    }
    drop(store);
    let out = dir.path().join("out");
    let o = adaptest(&["export", "--store", path(&store_path), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for d in &datasets {
        let (summary, detail) = export_csv(&d.attempts);
        assert_eq!(std::fs::read_to_string(out.join(format!("{}.summary.csv", d.cohort_id))).unwrap(), summary);
        assert_eq!(std::fs::read_to_string(out.join(format!("{}.detail.csv", d.cohort_id))).unwrap(), detail);
    }
    let o = adaptest(&["export", "--store", path(&store_path), "--out", path(&out), "--cohort", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let o = adaptest(&["export", "--store", "/no/such.jsonl", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
