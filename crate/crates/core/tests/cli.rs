//! End-to-end runs of the command-line binary: synth -> replay ->
//! background -> analytics, plus usage-error exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_search-assist"))
}

fn scenario_json(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r##"{
  "seed": 7,
  "duration_ms": 1200000,
  "base_rate_per_min": 120,
  "session_pool": 50,
  "vocab": [
    {"q": "obama", "weight": 5.0},
    {"q": "weather", "weight": 3.0},
    {"q": "#scotus", "weight": 1.0},
    {"q": "healthcare", "weight": 1.0}
  ],
  "bursts": [
    {
      "t0_ms": 300000,
      "ramp_ms": 60000,
      "hold_ms": 600000,
      "decay_ms": 120000,
      "peak_fraction": 0.2,
      "query": "#scotus",
      "followups": [{"q": "healthcare", "p_follow": 0.6, "delay_ms": 60000}]
    }
  ],
  "tweet_rate_per_min": 30,
  "tweet_match_fraction": 0.4
}"##,
    )
    .unwrap();
    path
}

#[test]
fn synth_replay_background_and_analytics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_json(dir.path());
    let prefix = dir.path().join("hose");

    let out = bin()
        .args(["synth", "--scenario"])
        .arg(&scenario)
        .arg("--out-prefix")
        .arg(&prefix)
        .output()
        .unwrap();
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
    let queries = dir.path().join("hose.queries.jsonl");
    let tweets = dir.path().join("hose.tweets.jsonl");
    assert!(queries.exists() && tweets.exists());

    let snapdir = dir.path().join("snapshots");
    let out = bin()
        .args(["replay", "--queries"])
        .arg(&queries)
        .arg("--tweets")
        .arg(&tweets)
        .arg("--out")
        .arg(&snapdir)
        .output()
        .unwrap();
    assert!(out.status.success(), "replay failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(snapdir.join("MANIFEST.Realtime").exists());

    let bgdir = dir.path().join("bg");
    let out = bin()
        .args(["background", "--queries"])
        .arg(&queries)
        .arg("--tweets")
        .arg(&tweets)
        .arg("--out")
        .arg(&bgdir)
        .output()
        .unwrap();
    assert!(out.status.success(), "background failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(bgdir.join("MANIFEST.Background").exists());

    let churn_csv = dir.path().join("churn.csv");
    let out = bin()
        .args(["churn", "--queries"])
        .arg(&queries)
        .args(["--k", "10", "--interval", "5", "--out"])
        .arg(&churn_csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "churn failed: {}", String::from_utf8_lossy(&out.stderr));
    let churn = std::fs::read_to_string(&churn_csv).unwrap();
    assert!(churn.starts_with("interval_start,churn\n"));
    assert!(churn.lines().count() > 1);

    let freq_csv = dir.path().join("freq.csv");
    let out = bin()
        .args(["freq", "--queries"])
        .arg(&queries)
        .args(["--track", "#scotus,healthcare", "--interval", "5", "--out"])
        .arg(&freq_csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "freq failed: {}", String::from_utf8_lossy(&out.stderr));
    let freq = std::fs::read_to_string(&freq_csv).unwrap();
    assert!(freq.starts_with("interval_start,query,freq\n"));
    assert!(freq.contains("#scotus"));
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["replay", "--queries", "/nonexistent/queries.jsonl", "--out"])
        .arg(dir.path().join("snap"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = bin().args(["replay", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_subcommand_exits_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "duration_ms": -5, "base_rate_per_min": 0, "vocab": []}"#)
        .unwrap();
    let out = bin()
        .args(["synth", "--scenario"])
        .arg(&bad)
        .arg("--out-prefix")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("replay"));
    assert!(text.contains("serve"));
}
