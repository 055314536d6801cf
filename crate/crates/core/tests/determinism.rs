use std::fs;
use std::path::Path;

use fbm_drift::commands::{cmd_optimize, cmd_simulate, cmd_verify};
use fbm_drift::config::RunConfig;
use tempfile::TempDir;

fn config(dir: &Path, threads: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json_str(r#"{"n_past": 400, "n_future": 40, "replicas": 600}"#).unwrap();
    cfg.threads = Some(threads);
    cfg.seed = seed;
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn simulate_and_verify_are_byte_identical_across_thread_counts() {
    let dirs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1, 3, 4]) {
        let cfg = config(dir.path(), threads, 99);
        cmd_simulate(&cfg).unwrap();
        cmd_verify(&cfg).unwrap();
        cmd_optimize(&cfg).unwrap();
    }
    for name in ["config.json", "paths.csv", "summary.csv", "report.json", "strategies.csv", "results.json"] {
        let first = read(dirs[0].path(), name);
        assert!(!first.is_empty());
        for d in &dirs[1..] {
            assert!(first == read(d.path(), name), "{name} differs across thread counts");
        }
    }
}

#[test]
fn repeated_runs_repeat_and_seeds_matter() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    cmd_simulate(&config(a.path(), 2, 5)).unwrap();
    cmd_simulate(&config(b.path(), 2, 5)).unwrap();
    cmd_simulate(&config(c.path(), 2, 6)).unwrap();
    assert_eq!(read(a.path(), "paths.csv"), read(b.path(), "paths.csv"));
    assert_ne!(read(a.path(), "paths.csv"), read(c.path(), "paths.csv"));
}

#[test]
fn effective_config_reloads_to_itself() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 1, 3);
    cmd_simulate(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("config.json")).unwrap();
    let reloaded = RunConfig::from_json_str(&text).unwrap();
    assert_eq!(reloaded.to_json() + "\n", text);
    assert_eq!(reloaded.hash().unwrap(), cfg.hash().unwrap());
}
