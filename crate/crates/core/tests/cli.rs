use std::path::Path;
use std::process::{Command, Output};

fn satground(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satground"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn short_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.txt");
    std::fs::write(&path, "horizon = 600\ndrain = 300\n").unwrap();
    path
}

#[test]
fn simulate_writes_outputs_and_one_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let out = dir.path().join("run");
    let res = satground(&["simulate", "--scenario", scenario.to_str().unwrap()], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("answered="));
    for f in ["summary.txt", "queries.csv", "trace.log", "backlog.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("queries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("captured = 300"));
    assert!(!std::fs::read_dir(&out).unwrap().any(|e| e.unwrap().path().extension() == Some("tmp".as_ref())));
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.txt");
    std::fs::write(&scenario, "corpus = no_such_corpus.tsv\n").unwrap();
    let res = satground(&["simulate", "--scenario", scenario.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no_such_corpus.tsv"));
}

#[test]
fn missing_scenario_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let res = satground(&["simulate", "--scenario", "/no/such/scenario.txt"], &dir.path().join("o"));
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/no/such/scenario.txt"));
}

#[test]
fn corpus_smaller_than_k_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.txt");
    std::fs::write(
        &scenario,
        "corpus.families = water\ncorpus.variants = a,b\ncorpus.images_per_label = 1\n",
    )
    .unwrap();
    let res = satground(&["simulate", "--scenario", scenario.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let s = scenario.to_str().unwrap();
    let a = satground(&["simulate", "--scenario", s, "--seed", "1"], &dir.path().join("a"));
    let b = satground(&["simulate", "--scenario", s, "--seed", "2"], &dir.path().join("b"));
    assert!(a.status.success() && b.status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("queries.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn backlog_emits_latency_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bl");
    let res = satground(&["backlog", "--horizon", "600", "--image-bytes", "600000"], &out);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(out.join("backlog.csv")).unwrap();
    assert!(csv.starts_with("index,capture_time,delivered,latency\n"));
    assert_eq!(csv.lines().count(), 301);
    let res = satground(&["backlog", "--image-bytes", "huge"], &out);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_summary_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path());
    let s = scenario.to_str().unwrap();
    let out = dir.path().join("tc");
    let res = satground(
        &["sweep", "--scenario", s, "--dimension", "T_Conf", "--values", "0.65:0.95:0.1"],
        &out,
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for v in ["0.65", "0.75", "0.85", "0.95"] {
        assert!(out.join(format!("T_Conf={v}")).join("summary.txt").is_file(), "{v}");
    }
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(String::from_utf8(res.stdout).unwrap().lines().count(), 4);

    let out = dir.path().join("k");
    let res = satground(&["sweep", "--scenario", s, "--dimension", "K", "--values", "0:5:1"], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 7);
}

#[test]
fn sweep_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(satground(&["sweep", "--dimension", "speed", "--values", "1"], &out).status.code(), Some(1));
    assert_eq!(satground(&["sweep", "--dimension", "K", "--values", ""], &out).status.code(), Some(1));
    assert_eq!(satground(&["sweep", "--dimension", "T_M", "--values", "1.5"], &out).status.code(), Some(1));
}
