use std::path::Path;
use std::process::{Command, Output};

use svctrust_core::report::SweepReport;

fn svctrust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svctrust"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
name = "small"
duration = 900
seed = 3
validity_interval = 60

[[sweep]]
alpha = 1.0
beta = 0.0

[[sweep]]
alpha = 0.5
beta = 0.5

[[service]]
id = "A"
production_period = 5
insertion_period = 20
base_latency_ms = 40
cpu_tier = 1
sla_ert_ms = 200

[[service]]
id = "B"
production_period = 5
insertion_period = 60
base_latency_ms = 20
cpu_tier = 2
sla_ert_ms = 200
"#;

#[test]
fn validate_accepts_bundled_scenario() {
    let out = svctrust(&["validate", "--scenario", "paper_scenario"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("7 services"));
}

#[test]
fn config_errors_exit_with_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            SMALL.replace("alpha = 0.5\nbeta = 0.5", "alpha = 0.9\nbeta = 0.3"),
            "sweep[1]",
        ),
        (
            SMALL.replace("duration = 900", "duration = 100"),
            "duration",
        ),
        (
            SMALL.replace("insertion_period = 60", "insertion_period = -1"),
            "service[1].insertion_period",
        ),
        (
            SMALL.replace("seed = 3", "seed = 3\nbogus = 1"),
            "unknown field `bogus`",
        ),
    ];
    for (body, needle) in cases {
        let path = write_scenario(dir.path(), &body);
        for verb in ["validate", "run"] {
            let out_dir = dir.path().join("o");
            let mut args = vec![verb, "--scenario", &path];
            if verb == "run" {
                args.extend(["--out", out_dir.to_str().unwrap()]);
            }
            let out = svctrust(&args);
            assert_eq!(
                out.status.code(),
                Some(1),
                "{verb} {needle}: {}",
                stderr(&out)
            );
            assert!(stderr(&out).contains(needle), "{needle}: {}", stderr(&out));
        }
    }
    let missing = svctrust(&["validate", "--scenario", "/definitely/not/here.toml"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn run_writes_reports_and_export_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = svctrust(&[
        "run",
        "--scenario",
        &path,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in [
        "trust_report_alpha1_beta0.json",
        "trust_report_alpha0.5_beta0.5.json",
        "sweep_report.json",
        "summary.csv",
        "probes.csv",
        "samples.csv",
        "events.log",
    ] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);
    assert_eq!(
        summary.lines().next().unwrap(),
        "rank,alpha=1 beta=0,alpha=0.5 beta=0.5"
    );
    assert_eq!(summary.lines().count(), 3);

    let report = out_dir.join("sweep_report.json");
    let csv = svctrust(&[
        "export",
        "--report",
        report.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(csv.status.success());
    assert_eq!(String::from_utf8_lossy(&csv.stdout), summary);

    let json_path = dir.path().join("copy.json");
    let json = svctrust(&[
        "export",
        "--report",
        report.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert!(json.status.success());
    let original = SweepReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let copy = SweepReport::from_json(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(original, copy);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = SMALL.to_owned();
    body = body.replace("cpu_tier = 1", "cpu_tier = 1\naccept_probability = 0.7");
    let path = write_scenario(dir.path(), &body);
    let run = |seed: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let o = svctrust(&[
            "run",
            "--scenario",
            &path,
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out_dir.join("probes.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}

#[test]
fn persistent_stores_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), SMALL);
    let stores = dir.path().join("stores");
    let out = svctrust(&[
        "run",
        "--scenario",
        &path,
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--stores",
        stores.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let perfdb = std::fs::read_to_string(stores.join("perfdb.log")).unwrap();
    assert_eq!(
        perfdb.lines().next().unwrap(),
        "service_id,kind,evaluated_at,value"
    );
    // 3 windows x 2 services
    assert_eq!(perfdb.lines().count(), 1 + 6);
    assert!(stores.join("trust_history.log").is_file());
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    std::fs::write(&report, "{ not json").unwrap();
    let bad = svctrust(&["export", "--report", report.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let absent = svctrust(&[
        "export",
        "--report",
        dir.path().join("none.json").to_str().unwrap(),
    ]);
    assert_eq!(absent.status.code(), Some(2));
    let unreachable = svctrust(&[
        "rank",
        "--url",
        "http://127.0.0.1:9/",
        "--alpha",
        "0.5",
        "--beta",
        "0.5",
    ]);
    assert_eq!(unreachable.status.code(), Some(2));
}
