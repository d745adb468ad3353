use std::fs;
use std::path::Path;

use condwalk::harness::config::{Experiment, ExperimentConfig, LimitCheck, StableCheck};
use condwalk::harness::report::{replay_verdicts, verify_manifest, MANIFEST, REPORT};
use condwalk::harness::run::run_and_write;
use condwalk::rng::{run_partitioned, split_budget};
use condwalk::walk::FamilyKind;
use proptest::prelude::*;
use tempfile::tempdir;

fn stable_config(seed: u64, partitions: usize) -> ExperimentConfig {
    ExperimentConfig::new(
        Experiment::StableCheck(StableCheck { alpha: 1.5, beta: 0.5, scale: 1.0, samples: 20_000, cf_points: vec![0.5, 1.0, 2.0] }),
        seed,
        partitions,
    )
}

fn bridge_config() -> ExperimentConfig {
    ExperimentConfig::new(
        Experiment::LimitLaw(LimitCheck::Bridge { family: FamilyKind::LazyLattice { p: 0.3 }, n_steps: 2000, points: vec![0.5, 1.0, 2.0] }),
        1,
        2,
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let cfg = stable_config(17, 4);
    run_and_write(&cfg, None, Some(a.path())).unwrap();
    run_and_write(&cfg, None, Some(b.path())).unwrap();
    let ca = csv_files(a.path());
    assert!(!ca.is_empty());
    assert_eq!(ca, csv_files(b.path()));
    assert_eq!(fs::read(a.path().join(REPORT)).unwrap(), fs::read(b.path().join(REPORT)).unwrap());
}

#[test]
fn partition_count_is_part_of_the_seed() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let ra = run_and_write(&stable_config(17, 4), None, Some(a.path())).unwrap();
    let rb = run_and_write(&stable_config(17, 8), None, Some(b.path())).unwrap();
    assert_ne!(csv_files(a.path()), csv_files(b.path()));
    assert_eq!(ra.replicas, rb.replicas);
}

#[test]
fn replay_reproduces_limit_law_verdicts() {
    let dir = tempdir().unwrap();
    let report = run_and_write(&bridge_config(), None, Some(dir.path())).unwrap();
    assert!(verify_manifest(dir.path()).unwrap().is_empty());
    let replay = replay_verdicts(dir.path()).unwrap();
    assert!(replay.consistent);
    assert_eq!(replay.pass, report.pass);
    assert_eq!(replay.checks.len(), report.checks.len());
    for ((name, stat, pass), c) in replay.checks.iter().zip(&report.checks) {
        assert_eq!(name, &c.name);
        assert_eq!(*stat, c.statistic);
        assert_eq!(*pass, c.pass);
    }
}

#[test]
fn missing_or_edited_tables_break_the_manifest() {
    let dir = tempdir().unwrap();
    run_and_write(&bridge_config(), None, Some(dir.path())).unwrap();
    let (name, bytes) = csv_files(dir.path()).remove(0);
    let path = dir.path().join(&name);

    let mut edited = bytes.clone();
    let last = edited.len() - 2;
    edited[last] = if edited[last] == b'1' { b'2' } else { b'1' };
    fs::write(&path, &edited).unwrap();
    assert_eq!(verify_manifest(dir.path()).unwrap().len(), 1);
    assert!(replay_verdicts(dir.path()).is_err());

    fs::remove_file(&path).unwrap();
    let problems = verify_manifest(dir.path()).unwrap();
    assert!(problems.iter().any(|p| p.contains(&name) && p.contains("missing")));
    assert!(replay_verdicts(dir.path()).is_err());

    fs::write(&path, &bytes).unwrap();
    assert!(replay_verdicts(dir.path()).unwrap().consistent);
}

#[test]
fn rewrite_replaces_manifest() {
    let dir = tempdir().unwrap();
    run_and_write(&stable_config(1, 2), None, Some(dir.path())).unwrap();
    run_and_write(&stable_config(2, 2), None, Some(dir.path())).unwrap();
    assert!(dir.path().join(MANIFEST).exists());
    assert!(verify_manifest(dir.path()).unwrap().is_empty());
    let stored: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(stored["seed"], 2);
}

#[test]
fn config_round_trip_and_validation() {
    let mut cfg = stable_config(3, 2);
    cfg.tolerances.insert("cf".into(), 0.02);
    let text = serde_json::to_string(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["kind"], "stable-check");
    assert!(v["params"].is_object());
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.tolerance("cf").unwrap(), 0.02);

    cfg.tolerances.insert("nonsense".into(), 1.0);
    assert!(cfg.validate().is_err());
    assert!(ExperimentConfig { partitions: 0, ..stable_config(3, 2) }.validate().is_err());
}

proptest! {
    #[test]
    fn budget_split_accounts_for_every_replica(total in 0u64..1_000_000, parts in 1usize..64) {
        let shares = split_budget(total, parts);
        prop_assert_eq!(shares.len(), parts);
        prop_assert_eq!(shares.iter().sum::<u64>(), total);
        let (lo, hi) = (shares.iter().min().unwrap(), shares.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn partitioned_runs_see_their_shares(total in 0u64..5000, parts in 1usize..12, seed in any::<u64>()) {
        let seen = run_partitioned(seed, parts, total, |i, share, _| (i, share));
        prop_assert_eq!(seen.iter().map(|s| s.1).sum::<u64>(), total);
        prop_assert!(seen.iter().enumerate().all(|(k, s)| s.0 == k));
    }
}
