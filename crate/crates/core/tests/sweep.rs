use std::fs;
use std::path::Path;

use nfar_core::config::ExperimentConfig;
use nfar_core::experiment::{emit_artifacts, load_sweep, run_sweep, SweepOptions};
use nfar_core::Error;

const TINY: &str = r#"
[sim]
sim_grid = 8
learn_grid = 4
burn_in = 20

[train]
epochs_max = 3
patience = 3
batch_size = 8
s_mc = 8
hidden = [4, 4]

[sweep]
t_values = [20, 30]
replications = 3
master_seed = 5
designated_replication = 1
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(TINY).unwrap()
}

fn opts(workers: usize, max_new_cells: Option<usize>) -> SweepOptions {
    SweepOptions {
        workers: Some(workers),
        max_new_cells,
        quiet: true,
        ..Default::default()
    }
}

fn results(dir: &Path) -> String {
    fs::read_to_string(dir.join("results.csv")).unwrap()
}

#[test]
fn interrupted_sweep_resumes_to_identical_results() {
    let cfg = tiny();
    let whole = tempfile::tempdir().unwrap();
    let full = run_sweep(&cfg, whole.path(), &opts(1, None)).unwrap();
    assert!(full.is_complete());
    assert_eq!(full.cells.len(), 6);
    emit_artifacts(&full, whole.path()).unwrap();

    let parts = tempfile::tempdir().unwrap();
    let first = run_sweep(&cfg, parts.path(), &opts(1, Some(2))).unwrap();
    assert!(!first.is_complete());
    assert_eq!(first.cells.len(), 2);
    assert_eq!(first.missing().len(), 4);
    let second = run_sweep(&cfg, parts.path(), &opts(1, Some(1))).unwrap();
    assert_eq!(second.cells.len(), 3);
    let rest = run_sweep(&cfg, parts.path(), &opts(1, None)).unwrap();
    assert!(rest.is_complete());
    emit_artifacts(&rest, parts.path()).unwrap();

    assert_eq!(results(whole.path()), results(parts.path()));
    assert_eq!(
        fs::read_to_string(whole.path().join("summary.csv")).unwrap(),
        fs::read_to_string(parts.path().join("summary.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(whole.path().join("predicted.csv")).unwrap(),
        fs::read_to_string(parts.path().join("predicted.csv")).unwrap()
    );
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = tiny();
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let a = run_sweep(&cfg, one.path(), &opts(1, None)).unwrap();
    let b = run_sweep(&cfg, two.path(), &opts(2, None)).unwrap();
    assert_eq!(a.results_csv(), b.results_csv());
}

#[test]
fn finished_sweep_reloads_without_recomputing() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let a = run_sweep(&cfg, dir.path(), &opts(1, None)).unwrap();
    let loaded = load_sweep(&cfg, dir.path()).unwrap();
    assert_eq!(loaded.results_csv(), a.results_csv());
    let again = run_sweep(&cfg, dir.path(), &opts(1, Some(0))).unwrap();
    assert!(again.is_complete());
    assert_eq!(again.results_csv(), a.results_csv());
}

#[test]
fn artifacts_are_written() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let r = run_sweep(&cfg, dir.path(), &opts(1, None)).unwrap();
    let files = emit_artifacts(&r, dir.path()).unwrap();
    for name in ["results.csv", "timings.csv", "summary.csv", "loglog.svg", "true.csv", "predicted.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
        assert!(files.iter().any(|p| p.ends_with(name)));
    }
    assert!(!dir.path().join("failures.json").exists());

    let csv = results(dir.path());
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "b,T,g,stop_epoch");
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let g: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(g.is_finite() && g >= 0.0);
    }
    let summary = r.summary();
    assert_eq!(summary.iter().map(|s| s.t).collect::<Vec<_>>(), vec![20, 30]);
    assert!(summary.iter().all(|s| s.n == 3));
    let truth = fs::read_to_string(dir.path().join("true.csv")).unwrap();
    assert_eq!(truth.lines().count(), 4);
}

#[test]
fn changed_config_in_existing_directory_is_rejected() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&cfg, dir.path(), &opts(1, Some(1))).unwrap();
    let mut other = cfg.clone();
    other.sweep.master_seed += 1;
    assert!(matches!(
        run_sweep(&other, dir.path(), &opts(1, None)),
        Err(Error::Config(_))
    ));
}

#[test]
fn different_master_seeds_give_different_results() {
    let cfg = tiny();
    let mut other = cfg.clone();
    other.sweep.master_seed = 6;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_sweep(&cfg, a.path(), &opts(1, Some(1))).unwrap();
    let rb = run_sweep(&other, b.path(), &opts(1, Some(1))).unwrap();
    assert_ne!(ra.cells[0].g, rb.cells[0].g);
}
