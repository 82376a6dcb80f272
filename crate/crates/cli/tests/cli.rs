// Copyright 2026 The nvmetro Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvmetro_cli::manifest::{RunManifest, MANIFEST_FILE};
use nvmetro_cli::Job;

fn nvmetro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvmetro"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_CAMPAIGN: &str = r#"
seed = 11
[campaign]
true_phase = 0.05
nu = 100
n_estimates = 2000
nu_values = [50, 200]
[model]
visibility = 0.869
n_spins = 2
"#;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn rerun_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CAMPAIGN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]).status.success());
    assert!(nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&b), "--threads", "3"]).status.success());
    for name in ["histogram.csv", "variance_curve.csv", "report.txt"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let ma = RunManifest::read(&a.join(MANIFEST_FILE)).unwrap();
    let mb = RunManifest::read(&b.join(MANIFEST_FILE)).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.config, mb.config);
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CAMPAIGN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&b), "--seed", "12"]).status.success());
    let mb = RunManifest::read(&b.join(MANIFEST_FILE)).unwrap();
    assert_eq!(mb.seed, 12);
    assert!(mb.config.contains("seed = 12"));
    assert_ne!(
        std::fs::read(a.join("histogram.csv")).unwrap(),
        std::fs::read(b.join("histogram.csv")).unwrap()
    );
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_CAMPAIGN);
    let run = dir.path().join("run");
    assert!(nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&run)]).status.success());
    let manifest = run.join(MANIFEST_FILE);
    let o = nvmetro(&["replay", s(&manifest), "--out", s(&dir.path().join("again"))]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut m = RunManifest::parse(&text).unwrap();
    m.outputs[0].0 = "0".repeat(64);
    let forged = write(dir.path(), "forged.txt", &m.to_text());
    let o = nvmetro(&["replay", s(&forged), "--out", s(&dir.path().join("third"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("histogram.csv differs"), "{}", stderr(&o));
}

#[test]
fn missing_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[campaign]\ntrue_phase = 0.05\nnu = 100\n[model]\n");
    let o = nvmetro(&["campaign", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_estimates"), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "seed = 1\n[circuit]\nn_spins = 2\nextra = 3\n");
    let o = nvmetro(&["interfere", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("extra") && err.contains("line 4"), "{err}");
}

#[test]
fn unknown_key_in_tagged_table_reports_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[circuit]\nn_spins = 2\n\n[visibility]\nkind = \"ideal\"\nextra = 3\n");
    let o = nvmetro(&["interfere", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("extra") && err.contains("line 4"), "{err}");
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let o = nvmetro(&["budget"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn budget_rejects_fidelity_above_one_and_accepts_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "[table]\nn_spins = 2\nentries = [{ label = \"x\", fidelity = 1.2, power = 1 }]\n",
    );
    assert_eq!(nvmetro(&["budget", "--config", s(&bad), "--out", s(&dir.path().join("b"))]).status.code(), Some(2));

    let empty = write(dir.path(), "empty.toml", "[table]\nn_spins = 2\nentries = []\n");
    let out = dir.path().join("e");
    assert!(nvmetro(&["budget", "--config", s(&empty), "--out", s(&out)]).status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("overall 1.00000"), "{report}");
}

#[test]
fn shipped_budget_matches_measured_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace_root().join("configs/budget_two_spin.toml");
    let out = dir.path().join("b");
    let o = nvmetro(&["budget", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("budget.csv")).unwrap();
    assert!(csv.starts_with("label,fidelity,uncertainty,power,factor,running_product\n"));
    let last: f64 = csv.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((last - 0.868).abs() <= 0.007, "{last}");
}

#[test]
fn budget_check_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[table]\nn_spins = 2\nentries = [{ label = \"x\", fidelity = 0.9, power = 1 }]\n[check]\nexpected = 0.5\ntolerance = 0.01\n",
    );
    let out = dir.path().join("o");
    assert_eq!(nvmetro(&["budget", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
    assert!(out.join(MANIFEST_FILE).exists());
}

#[test]
fn identity_target_succeeds_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace_root().join("configs/optimize_identity.toml");
    let out = dir.path().join("o");
    let o = nvmetro(&["optimize-pulse", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("iterations        0"), "{report}");
    assert!(report.contains("robust_fidelity   1.000000"), "{report}");
    assert!(std::fs::read_to_string(out.join("pulse.txt")).unwrap().starts_with("# nvmetro pulse waveform v1"));
}

#[test]
fn unreachable_fidelity_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        r#"
min_fidelity = 0.999
[pulse]
n_slices = 10
slice_ns = 20.0
channels = ["f1_real"]
[target]
kind = "cphase"
m_n = 1
two_m_c = -1
[noise]
n_samples = 1
sigma_mag_khz = 0.0
sigma_amp = 0.0
[optimizer]
max_iterations = 3
[map]
delta_sigma = [0.0]
delta1_sigma = [0.0]
"#,
    );
    let out = dir.path().join("o");
    let o = nvmetro(&["optimize-pulse", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(out.join("pulse.txt").exists() && out.join(MANIFEST_FILE).exists());
}

#[test]
fn ideal_two_spin_gains_three_db() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace_root().join("configs/interfere_ideal.toml");
    let out = dir.path().join("o");
    assert!(nvmetro(&["interfere", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("visibility_fit       1.000000"), "{report}");
    assert!(report.contains("db_over_sql_fit      3.0103"), "{report}");
    let csv = std::fs::read_to_string(out.join("fringe.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("phi_rad,population,stderr"));
    assert_eq!(csv.lines().count(), 62);
}

#[test]
fn scaling_flags_override_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = nvmetro(&["scaling", "--max-n", "10", "--one-spin", "1.0", "--per-spin", "1.0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("scaling.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,visibility,qfi,sql,hl,db_over_sql,argmax");
    assert_eq!(lines.len(), 11);
    // perfect visibility: QFI equals the Heisenberg column, maximum at the edge
    let row: Vec<&str> = lines[10].split(',').collect();
    assert_eq!(row[2], row[4]);
    assert_eq!(row[6], "1");
}

#[test]
fn default_scaling_flags_single_argmax_region() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert!(nvmetro(&["scaling", "--out", s(&out)]).status.success());
    let csv = std::fs::read_to_string(out.join("scaling.csv")).unwrap();
    let flagged: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(flagged, vec!["24", "25"]);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvmetro(&["selftest", "--out", s(&dir.path().join("o"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
}

#[test]
fn shipped_configs_resolve() {
    let dir = workspace_root().join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        let command = match stem.split('_').next().unwrap() {
            "optimize" => "optimize-pulse",
            other => other,
        };
        let text = std::fs::read_to_string(&path).unwrap();
        let job = Job::from_text(command, &text, &dir).unwrap_or_else(|e| panic!("{stem}: {e}"));
        // resolved configs must parse back to the same job
        let again = Job::from_text(command, &job.config_toml().unwrap(), Path::new("/")).unwrap();
        assert_eq!(job.config_toml().unwrap(), again.config_toml().unwrap(), "{stem}");
        n += 1;
    }
    assert!(n >= 10);
}
