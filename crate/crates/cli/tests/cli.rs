use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rkm_cli::config::ExperimentConfig;
use rkm_cli::io::read_dataset;

fn rkm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rkm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SAMPLE_CONFIG: &str = r#"
experiment = "sample"
seeds = [7]
output = "data"
sample = { per_component = [2, 2] }

[model]
kind = "figure1"
n = 4
s = 0.5
"#;

#[test]
fn sample_writes_matching_csv_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SAMPLE_CONFIG);
    let out = rkm(dir.path(), &["sample", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv_path = dir.path().join("data/dataset_seed7.csv");
    let csv = fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "x0,x1,x2,x3,label");
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 5));

    let from_csv = read_dataset(&csv_path).unwrap();
    let from_bin = read_dataset(&dir.path().join("data/dataset_seed7.bin")).unwrap();
    assert_eq!(from_csv.labels(), from_bin.labels());
    for (a, b) in from_csv.points().iter().zip(from_bin.points()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn sample_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SAMPLE_CONFIG);
    assert!(rkm(dir.path(), &["sample", "--config", &cfg, "--out", "a"])
        .status
        .success());
    assert!(rkm(
        dir.path(),
        &["sample", "--config", &cfg, "--out", "b", "--threads", "2"]
    )
    .status
    .success());
    let a = fs::read(dir.path().join("a/dataset_seed7.bin")).unwrap();
    let b = fs::read(dir.path().join("b/dataset_seed7.bin")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn odd_dimension_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SAMPLE_CONFIG.replace("n = 4", "n = 5"));
    let out = rkm(dir.path(), &["sample", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("even"), "{stderr}");
    assert!(!dir.path().join("data").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SAMPLE_CONFIG}\nbogus = 1\n"));
    assert_eq!(
        rkm(dir.path(), &["sample", "--config", &cfg]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        rkm(dir.path(), &["sample", "--config", "nope.toml"])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "file").unwrap();
    let cfg = write_config(dir.path(), SAMPLE_CONFIG);
    let out = rkm(
        dir.path(),
        &["sample", "--config", &cfg, "--out", "blocker/sub"],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn figure1_panels_report_accuracy_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
t = 0.1
seeds = [0]
[[panels]]
n = 100
s = 0.6
[[panels]]
n = 10
s = 0.9
[[panels]]
n = 10
s = 0.0
"#,
    );
    let out = rkm(dir.path(), &["figure1", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(dir.path().join("out/figure1_summary.csv")).unwrap();
    let acc: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(acc[0] >= 0.95, "{summary}");

    let panel = fs::read_to_string(dir.path().join("out/figure1_n100_s0.6_seed0.csv")).unwrap();
    assert_eq!(
        panel.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 200
    );
    let svg = fs::read_to_string(dir.path().join("out/figure1_n100_s0.6_seed0.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("href"));

    let degenerate = fs::read_to_string(dir.path().join("out/figure1_n10_s0_seed0.csv")).unwrap();
    assert!(degenerate.starts_with("# warning"), "{degenerate}");
}

#[test]
fn figure1_large_panel_needs_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[panels]]\nn = 10000\ns = 0.2\n");
    assert_eq!(
        rkm(dir.path(), &["figure1", "--config", &cfg])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gap_scan_ratio_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n_values = [20, 80]\nseeds = [0, 1]\npoints_per_dim = 10\n",
    );
    let out = rkm(dir.path(), &["gap-scan", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/gap_scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,seed,N,sigma1,sigma2,sigma3,sigma4,sigma5,ratio"
    );
    let ratio = |n: &str| -> f64 {
        let rows: Vec<f64> = csv
            .lines()
            .filter(|l| l.starts_with(&format!("{n},")))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        rows.iter().sum::<f64>() / rows.len() as f64
    };
    assert!(ratio("80") < ratio("20"));
}

#[test]
fn gap_scan_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_values = [3]\nsample = { fixed = 1 }\n");
    assert!(rkm(dir.path(), &["gap-scan", "--config", &cfg])
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("out/gap_scan.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[2], "1");
    assert_eq!(fields[3].parse::<f64>().unwrap(), 0.0);
    assert!(fields[4..].iter().all(|f| f.is_empty()));
}

#[test]
fn cov_cluster_reports_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = rkm(dir.path(), &["cov-cluster", "--seed", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/cov_cluster_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["seeds"], serde_json::json!([3]));
    assert_eq!(report["config"]["model"]["kind"], "figure1");
    let run = &report["runs"][0];
    assert!(run["accuracy"].as_f64().unwrap() >= 0.95);
    for key in [
        "delta",
        "t",
        "threshold",
        "surviving_eigenvalues",
        "residual_norm_b",
    ] {
        assert!(run["diagnostics"][key].is_number(), "{key}");
    }
    let echoed: ExperimentConfig = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(echoed.seeds, vec![3]);
}

#[test]
fn cov_cluster_scale_only_model_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
kind = "isotropic"
means = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]
variances = [1.0, 4.0]
"#,
    );
    let out = rkm(
        dir.path(),
        &["cov-cluster", "--config", &cfg, "--seed", "0"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radial"));
}

#[test]
fn kpca_gram_and_diagnostics_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
sample = { per_component = [60, 60] }
[model]
kind = "two_gaussians"
n = 20
distance = 8.0
[kernel]
kind = "gaussian"
"#,
    );
    let out = rkm(
        dir.path(),
        &["kpca-cluster", "--config", &cfg, "--seed", "1"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("out/kpca_cluster.csv").exists());

    let out = rkm(dir.path(), &["gram-check", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let gram = fs::read_to_string(dir.path().join("out/gram_check.csv")).unwrap();
    assert_eq!(gram.lines().count(), 1 + 4);

    let out = rkm(dir.path(), &["diag-ch", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let diag = fs::read_to_string(dir.path().join("out/diag_ch.csv")).unwrap();
    assert!(diag.contains("euclidean") && diag.contains("spherical"));
}

#[test]
fn mismatched_experiment_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SAMPLE_CONFIG);
    assert_eq!(
        rkm(dir.path(), &["gap-scan", "--config", &cfg])
            .status
            .code(),
        Some(2)
    );
}
