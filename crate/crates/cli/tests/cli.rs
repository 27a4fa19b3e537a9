use std::path::Path;
use std::process::{Command, Output};

use smagda_cli::commands::{dro_experiment, epoch_stats};
use smagda_cli::config::{self, DroRunConfig};
use smagda_cli::output::verify_manifest;

fn smagda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smagda")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const NCPL: &str = r#"
num_paths = 4
base_seed = 1
[problem]
kind = "ncpl"
d = 5
m1 = 1.0
m2 = 1.0
sigma_sq = 1.0
delta_sq = 1.0
matrix_seed = 0
[params]
mode = "theory"
T = 100
[init]
kind = "shared"
half_width = 20.0
[bound]
delta0_b0 = 12.0
"#;

#[test]
fn zero_paths_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, NCPL.replace("num_paths = 4", "num_paths = 0")).unwrap();
    let out = smagda(&["run-ensemble", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_paths"));
}

#[test]
fn unknown_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, NCPL.replace("base_seed = 1", "base_seed = 1\nnum_path = 3")).unwrap();
    let out = smagda(&["run-ensemble", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_path"));
}

#[test]
fn unknown_subcommand_and_flag_print_usage() {
    for args in [&["frobnicate"][..], &["bound", "x.toml", "--out", "o", "--bogus"][..]] {
        let out = smagda(args);
        assert_ne!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}

#[test]
fn bound_writes_full_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, NCPL).unwrap();
    let o = dir.path().join("b");
    assert_eq!(smagda(&["bound", s(&cfg), "--out", s(&o)]).status.code(), Some(0));
    let csv = std::fs::read_to_string(o.join("bound.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4999);
    assert!(rows[0].starts_with("0.0002,"));
    assert!(rows[4998].starts_with("0.9998,"));
    verify_manifest(&o).unwrap();
}

#[test]
fn ensemble_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let value: toml::Value = toml::from_str(NCPL).unwrap();
    std::fs::write(&cfg, serde_json::to_string(&value).unwrap()).unwrap();
    let ens = dir.path().join("e");
    assert_eq!(smagda(&["run-ensemble", s(&cfg), "--out", s(&ens)]).status.code(), Some(0));
    let csv = std::fs::read_to_string(ens.join("ensemble.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,metric,mean,min,max"));
    assert_eq!(csv.lines().count(), 1 + 101);
    let terminal = std::fs::read_to_string(ens.join("terminal.csv")).unwrap();
    assert_eq!(terminal.lines().count(), 1 + 4);

    let cmp = dir.path().join("c");
    let out = smagda(&["compare", s(&ens), s(&cfg), "--out", s(&cmp)]);
    let text = std::fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("q,empirical,theoretical,theoretical_scaled,dominated"));
    let all = text.lines().skip(1).all(|l| l.ends_with(",1"));
    assert_eq!(out.status.code(), Some(if all { 0 } else { 4 }));
}

#[test]
fn compare_rejects_mismatched_params() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, NCPL).unwrap();
    let ens = dir.path().join("e");
    assert_eq!(smagda(&["run-ensemble", s(&cfg), "--out", s(&ens)]).status.code(), Some(0));
    let other = dir.path().join("d.toml");
    std::fs::write(&other, NCPL.replace("mode = \"theory\"", "mode = \"theory\"\ntau1_times_ell = 0.1")).unwrap();
    let out = smagda(&["compare", s(&ens), s(&other), "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau1"));
}

#[test]
fn bound_refuses_constrained_dual() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.svm"), "+1 1:0.5 2:1\n-1 1:-0.3\n+1 2:0.7\n").unwrap();
    let cfg = dir.path().join("c.toml");
    let text = NCPL.replace(
        "kind = \"ncpl\"\nd = 5\nm1 = 1.0\nm2 = 1.0\nsigma_sq = 1.0\ndelta_sq = 1.0\nmatrix_seed = 0",
        "kind = \"dro\"\ndata = \"t.svm\"",
    );
    std::fs::write(&cfg, text).unwrap();
    let out = smagda(&["bound", s(&cfg), "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_reports_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.svm");
    std::fs::write(&f, "+1 1:0.5 7:1\n-1 3:-0.3\n+1 2:0.7\n").unwrap();
    let out = smagda(&["ingest", s(&f), "--min-d1", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["d1"], 9);
    assert_eq!(report["d2"], 3);
}

#[test]
fn epoch_stats_use_log10() {
    let e = epoch_stats(3, &[1.0, 10.0, 100.0]);
    assert_eq!(e.median_log10, 1.0);
    assert!((e.interdecile_width() - 1.6).abs() < 1e-12);
}

/// The DRO protocol on a small synthetic set: tuning, checkpointed runs and
/// per-epoch log statistics. Epoch 0 is the starting point `(0, u)`.
#[test]
fn dro_protocol_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut svm = String::new();
    for j in 0..200u32 {
        let a = ((j * 37) % 101) as f64 / 50.0 - 1.0;
        let b = ((j * 53) % 97) as f64 / 48.0 - 1.0;
        let label = if a + 0.5 * b > 0.1 { "+1" } else { "-1" };
        svm.push_str(&format!("{label} 1:{a} 2:{b} 3:1\n"));
    }
    std::fs::write(dir.path().join("s.svm"), svm).unwrap();
    let cfg: DroRunConfig = config::parse(
        r#"
runs = 6
epochs = 8
seed = 2
checkpoint_epochs = [0, 1, 2, 4, 8]
[problem]
data = "s.svm"
[problem.settings]
batch_size = 16
[tune]
epochs = 2
paths = 2
grid = { tau1 = [0.1, 0.01], beta = [0.001], p = [1.0, 0.1] }
"#,
        false,
    )
    .unwrap();
    let (outcome, tune, table) = dro_experiment(&cfg, dir.path()).unwrap();
    let tune = tune.unwrap();
    assert_eq!(tune.cells.len(), 4);
    assert_eq!(outcome.params.tau1, tune.winner().params.tau1);
    assert_eq!(outcome.epoch_len, 13);
    let epochs: Vec<usize> = outcome.epochs.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, [0, 1, 2, 4, 8]);
    assert_eq!(table.len(), 5 * 6);
    assert!(outcome.epochs.iter().all(|e| e.runs == 6 && e.p10_log10 <= e.median_log10 && e.median_log10 <= e.p90_log10));
    let best = tune.winner().median_final.unwrap();
    assert!(tune.cells.iter().filter_map(|c| c.median_final).all(|m| best <= m));
}
