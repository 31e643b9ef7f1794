mod common;

use std::path::Path;
use std::process::{Command, Output};

fn pvfc(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvfc"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .env_remove("PVFC_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(cfg: &Path, args: &[&str]) {
    let o = pvfc(cfg, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
}

#[test]
fn full_run_on_a_small_scene() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), common::SMALL);
    let out = dir.path().join("out");
    for cmd in ["simulate", "ingest", "rank", "fit", "predict", "evaluate", "report"] {
        ok(&cfg, &[cmd]);
    }
    for f in ["production.csv", "sites.csv", "satellite.csv", "nwp.csv"] {
        assert!(out.join("data").join(f).is_file(), "{f}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest/simulate.txt")).unwrap();
    assert!(manifest.contains("seed=7\n"));
    assert!(manifest.contains("tool=pvfc "));
    assert!(manifest.contains("[config]\nseed=7\n"));
    assert!(out.join("rank/S2.csv").is_file());
    assert!(out.join("models/ARX/S3/model.txt").is_file());
    assert!(out.join("forecasts/ARST/S1.csv").is_file());

    let scores = std::fs::read_to_string(out.join("scores/scores.csv")).unwrap();
    let mut ar_all = 0;
    for line in scores.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "AR" && f[2] == "ALL" {
            ar_all += 1;
            assert_eq!(f[5], "0", "reference skill: {line}");
        }
    }
    assert_eq!(ar_all, 24);
    let by_h = std::fs::read_to_string(out.join("scores/scores_by_horizon.csv")).unwrap();
    assert!(by_h.lines().any(|l| l.starts_with("360,ARX,")));
    let report = std::fs::read_to_string(out.join("report/all.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 * 24);

    // Reruns are byte-identical.
    let before = std::fs::read(out.join("report/all.csv")).unwrap();
    let sat = std::fs::read(out.join("data/satellite.csv")).unwrap();
    ok(&cfg, &["simulate"]);
    ok(&cfg, &["report"]);
    assert_eq!(std::fs::read(out.join("data/satellite.csv")).unwrap(), sat);
    assert_eq!(std::fs::read(out.join("report/all.csv")).unwrap(), before);

    let o = pvfc(&cfg, &["evaluate", "--model", "NOPE"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("available: AR, ARST, ARX"), "{}", stderr(&o));

    let o = pvfc(&cfg, &["rank", "--site", "S9"]);
    assert_eq!(code(&o), 1);

    ok(&cfg, &["fit", "--model", "AR", "--site", "S1"]);
}

#[test]
fn partial_fit_exits_with_warning_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = common::SMALL.replace(
        "train_span=2016-06-01T00:00:00Z/2016-06-04T00:00:00Z",
        "train_span=2016-06-01T00:00:00Z/2016-06-02T00:00:00Z",
    );
    let cfg = common::write_config(dir.path(), &text);
    ok(&cfg, &["simulate"]);
    let o = pvfc(&cfg, &["fit", "--model", "AR"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: AR at S1: horizon 24 not fitted"), "{}", stderr(&o));
}

#[test]
fn simulate_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), &common::SMALL.replace("seed=7\n", ""));
    let o = pvfc(&cfg, &["simulate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn config_and_usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), "seed=1\ncolour=blue\n");
    assert_eq!(code(&pvfc(&cfg, &["simulate"])), 1);
    let cfg = common::write_config(dir.path(), common::SMALL);
    assert_eq!(code(&pvfc(&cfg, &["explode"])), 1);
    let o = pvfc(&cfg, &["fit"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("does not exist"));
    let o = Command::new(env!("CARGO_BIN_EXE_pvfc")).args(["simulate", "--config"]).arg(&cfg).env("PVFC_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path(), common::SMALL);
    let out = dir.path().join("out");
    std::fs::create_dir_all(out.join("scores")).unwrap();
    std::fs::write(out.join("scores/scores.csv"), "").unwrap();
    let o = pvfc(&cfg, &["report"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no data rows"));

    ok(&cfg, &["simulate"]);
    std::fs::write(out.join("data/production.csv"), "site_id,timestamp_utc,power_mw\nS1,2016-06-01T00:00:00Z,x\n").unwrap();
    let o = pvfc(&cfg, &["ingest"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn report_comparisons_follow_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}report.pixels=ARX\nreport.st=ARST,AR\n", common::SMALL);
    let cfg = common::write_config(dir.path(), &text);
    for cmd in ["simulate", "fit", "evaluate", "report"] {
        ok(&cfg, &[cmd]);
    }
    let st = std::fs::read_to_string(dir.path().join("out/report/st.csv")).unwrap();
    let models: Vec<&str> = st.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(models.len(), 48);
    assert!(models[..24].iter().all(|m| *m == "ARST") && models[24..].iter().all(|m| *m == "AR"));
    assert!(dir.path().join("out/report/pixels.csv").is_file());
    assert!(!dir.path().join("out/report/all.csv").exists());
}
