//! Whole-pipeline runs at toy scale.

use tsad_core::config::{OracleMode, RunConfig};
use tsad_core::pipeline::{load_q_checkpoint, run_evaluation, run_training};
use tsad_core::reward::read_curve;
use tsad_core::Error;

fn tiny(dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.data.synthetic_length = 700;
    c.data.anomaly_rate = 0.02;
    c.data.n_steps = 8;
    c.vae.epochs = 2;
    c.vae.hidden = 8;
    c.env.episode_length = 60;
    c.agent.init_mem = 100;
    c.agent.batch_size = 16;
    c.agent.q_hidden = 4;
    c.agent.forest_trees = 10;
    c.agent.forest_subsample = 64;
    c.agent.sync_interval = 50;
    c.agent.epsilon_decay_steps = 100;
    c.run.episodes = 4;
    c.run.checkpoint_interval = 2;
    c.run.output_dir = dir.to_path_buf();
    c
}

#[test]
fn writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny(tmp.path());
    let mut seen = 0;
    let out = run_training(&config, None, |_| seen += 1).unwrap();
    assert_eq!(seen, 4);
    let r = &out.report;
    for name in &r.artifacts {
        assert!(out.run_dir.join(name).is_file(), "missing {name}");
    }
    for name in ["vae-synthetic-0.json", "q-synthetic-0.json", "q-synthetic-0-ep2.json", "q-synthetic-0-ep4.json", "lambda.csv", "reward.csv", "log.jsonl", "manifest.toml", "report.json", "validation_trace.csv"] {
        assert!(r.artifacts.iter().any(|a| a == name), "{name} not listed");
    }
    assert_eq!(r.training.episodes, 4);
    assert_eq!(r.training.steps, 240);
    assert!(r.budget.spent <= r.budget.total);
    assert_eq!(r.budget.total, (0.05 * r.data.train_windows as f64).ceil() as usize);

    let lambda = read_curve(&out.run_dir.join("lambda.csv")).unwrap();
    assert_eq!(lambda.len(), 4);
    let log = std::fs::read_to_string(out.run_dir.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);

    // The resolved manifest reproduces the run's configuration.
    let manifest = RunConfig::load(out.run_dir.join("manifest.toml")).unwrap();
    assert_eq!(&manifest, &r.config);
    assert!(manifest.reward.r_target.is_some());

    // Re-scoring the saved network reproduces the report's validation.
    let eval = run_evaluation(&config, &out.run_dir.join("q-synthetic-0.json")).unwrap();
    assert_eq!(Some(eval), r.validation);
}

#[test]
fn zero_episodes_leave_an_empty_log() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = tiny(tmp.path());
    config.run.episodes = 0;
    let out = run_training(&config, None, |_| {}).unwrap();
    assert_eq!(out.report.training.episodes, 0);
    assert_eq!(std::fs::read_to_string(out.run_dir.join("log.jsonl")).unwrap(), "");
}

#[test]
fn full_oracle_spends_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = tiny(tmp.path());
    config.active.oracle = OracleMode::Full;
    config.run.episodes = 1;
    let out = run_training(&config, None, |_| {}).unwrap();
    assert_eq!(out.report.budget.spent, 0);
}

#[test]
fn human_mode_without_a_service_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = tiny(tmp.path());
    config.active.oracle = OracleMode::Human;
    assert!(matches!(run_training(&config, None, |_| {}), Err(Error::Config(_))));
}

#[test]
fn checkpoint_for_other_window_size_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = tiny(tmp.path());
    config.run.episodes = 1;
    let out = run_training(&config, None, |_| {}).unwrap();
    let path = out.run_dir.join("q-synthetic-0.json");
    assert!(load_q_checkpoint(&path, 8).is_ok());
    assert!(matches!(load_q_checkpoint(&path, 9), Err(Error::Version(_))));
    assert!(matches!(load_q_checkpoint(&out.run_dir.join("vae-synthetic-0.json"), 8), Err(Error::Version(_))));
}
