use std::path::Path;
use std::process::{Command, Output};

fn dampde(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dampde"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn zero_data_simulates_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.json");
    std::fs::write(
        &cfg,
        r#"{"case": "custom", "custom": {"l": "0", "d0": "0", "exact_phi": "0", "exact_d": "0"}}"#,
    )
    .unwrap();
    let out = dampde(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--n",
            "4",
            "--m",
            "3",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path(), "simulate.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "simulate");
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[7].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"params": {"alpha": 1.0, "dleta": 0.1}}"#).unwrap();
    let out = dampde(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.dleta"));
}

#[test]
fn invalid_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.json");
    std::fs::write(&cfg, r#"{"params": {"delta": -1.0}}"#).unwrap();
    let out = dampde(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.delta"));
}

#[test]
fn custom_case_rejected_for_studies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"case": "custom", "custom": {"l": "x*y", "d0": "0"}}"#,
    )
    .unwrap();
    let out = dampde(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "convergence-time",
            "--m-list",
            "2,4",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_thread_runs_are_bitwise_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--threads",
        "1",
        "optimize",
        "--n",
        "4",
        "--m",
        "4",
        "--dump-fields",
    ];
    assert!(dampde(a.path(), &args).status.success());
    assert!(dampde(b.path(), &args).status.success());
    for f in [
        "optimize.csv",
        "fields_control.csv",
        "fields_phi.csv",
        "fields_d.csv",
    ] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(dampde(
        a.path(),
        &[
            "--threads",
            "1",
            "simulate",
            "--n",
            "8",
            "--m",
            "4",
            "--dump-fields"
        ]
    )
    .status
    .success());
    assert!(dampde(
        b.path(),
        &[
            "--threads",
            "3",
            "simulate",
            "--n",
            "8",
            "--m",
            "4",
            "--dump-fields"
        ]
    )
    .status
    .success());
    assert_eq!(
        read(a.path(), "fields_d.csv"),
        read(b.path(), "fields_d.csv")
    );
}

#[test]
fn time_study_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dampde(
        dir.path(),
        &["--svg", "convergence-time", "--n", "8", "--m-list", "2,4,8"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path(), "convergence-time.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("mode,n,M,tau"));
    assert!(
        lines[1].ends_with(','),
        "seconds stays empty without --timings"
    );
    let svg = read(dir.path(), "convergence-time.svg");
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn timings_fill_seconds() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dampde(
        dir.path(),
        &[
            "--timings",
            "convergence-space",
            "--m",
            "2",
            "--n-list",
            "2,4"
        ]
    )
    .status
    .success());
    let csv = read(dir.path(), "convergence-space.csv");
    let last = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(last.parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn optimize_study_reports_control_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dampde(
        dir.path(),
        &[
            "optimize-convergence",
            "--refine",
            "space",
            "--m",
            "4",
            "--n-list",
            "2,4",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path(), "optimize-convergence-space.csv");
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "ocp-space");
    assert!(row[9].parse::<f64>().unwrap() > 0.0);
    assert!(row[11].parse::<f64>().unwrap() < 1e-8);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dampde(dir.path(), &["verify", "--seed", "11"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(read(dir.path(), "verify.csv").lines().count() > 1);
}
