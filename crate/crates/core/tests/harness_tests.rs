mod common;

use common::scenarios::{frozen_single, frozen_single_env};
use irs_vlc::agents::{exhaustive_search, RandomOrientation};
use irs_vlc::harness::{
    emit_csv, evaluate_policy, read_results_csv, run_experiment, ExperimentConfig, PolicyKind, ResultRow,
    INCOMPLETE_MARKER, RESULT_HEADER,
};
use irs_vlc::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(value: f64, seed: Option<u64>) -> ResultRow {
    ResultRow {
        policy: "ddpg".into(),
        irs_rows: 10,
        irs_cols: 10,
        blockages: 2,
        velocity_mps: Some(0.5),
        power_w: 2.0,
        snr_db: 15.0,
        seed,
        metric: "sum_rate_bps".into(),
        value,
        aggregation: if seed.is_some() { "none" } else { "mean" }.into(),
    }
}

#[test]
fn single_row_writes_header_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_csv(&path, &[row(1.5e7, Some(3))]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], RESULT_HEADER.join(","));
    assert_eq!(lines[1], "ddpg,10,10,2,0.5,2,15,3,sum_rate_bps,15000000,none");
    assert!(!dir.path().join(".r.csv.tmp").exists());
    assert!(emit_csv(&path, &[]).is_err());
}

proptest! {
    #[test]
    fn values_round_trip_at_full_precision(
        bits in proptest::collection::vec(any::<u64>(), 1..20), seed in proptest::option::of(any::<u64>()),
    ) {
        let rows: Vec<ResultRow> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .filter(|v| v.is_finite())
            .map(|v| row(v, seed))
            .collect();
        prop_assume!(!rows.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&path, &rows).unwrap();
        let back = read_results_csv(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn rewriting_many_rows_is_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<ResultRow> = (0..10_000).map(|i| row(rng.random::<f64>() * 1e8, Some(i))).collect();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    emit_csv(&a, &rows).unwrap();
    emit_csv(&b, &read_results_csv(&a).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn tiny_config(dir: &std::path::Path) -> ExperimentConfig {
    let (scene, env) = frozen_single();
    let mut cfg = ExperimentConfig {
        name: "tiny".into(),
        seeds: vec![1, 2],
        output_dir: dir.to_path_buf(),
        train_episodes: 3,
        eval_horizon: 5,
        policies: vec![PolicyKind::Ddpg, PolicyKind::Random],
        scene,
        env,
        ..ExperimentConfig::default()
    };
    cfg.ddpg.actor_hidden = vec![8];
    cfg.ddpg.critic_hidden = vec![8];
    cfg.ddpg.batch_size = 4;
    cfg.sweep.powers = Some(vec![1.0, 2.0]);
    cfg
}

#[test]
fn experiment_writes_per_seed_and_aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let summary = run_experiment(&cfg).unwrap();
    assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
    // 2 policies x 2 seeds x 2 powers x 4 metrics, then mean and std per scenario
    let per_seed = summary.rows.iter().filter(|r| r.seed.is_some()).count();
    assert_eq!(per_seed, 2 * 2 * 2 * 4);
    assert_eq!(summary.rows.len() - per_seed, 2 * 2 * 4 * 2);
    assert_eq!(read_results_csv(&summary.results_csv).unwrap(), summary.rows);
    let training = std::fs::read_to_string(&summary.training_csv).unwrap();
    assert_eq!(training.lines().count(), 1 + 2 * 2 * 3);
    assert_eq!(summary.illegal_angles, 0);
}

#[test]
fn failed_run_leaves_incomplete_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.env.blockages.fixed = None;
    cfg.env.blockages.shape.hard_core_radius = 10.0;
    cfg.sweep.blockages = Some(vec![2]);
    assert!(run_experiment(&cfg).is_err());
    assert!(dir.path().join(INCOMPLETE_MARKER).exists());
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn empty_seed_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.seeds.clear();
    match run_experiment(&cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "seeds"),
        other => panic!("expected config error, got {other:?}"),
    }
    assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
}

#[test]
fn random_orientation_falls_short_of_the_grid_optimum() {
    let env = frozen_single_env(0);
    let (_, optimum) = exhaustive_search(&env, 41, 10_000).unwrap();
    let mut env = frozen_single_env(0);
    let mut policy = RandomOrientation::new();
    let seeds: Vec<u64> = (0..200).collect();
    let summary = evaluate_policy(&mut policy, &mut env, 1, &seeds, false).unwrap();
    let (mean, _) = summary.sum_rate();
    assert!(mean < 0.5 * optimum, "random {mean} vs optimum {optimum}");
}
