use std::process::Command;

use advsurprise::experiment::{run_campaign, Algorithm, ExperimentConfig, METRICS_HEADER, SCHEMA_LINE};
use advsurprise::gridworld::GridEnv;

fn tiny(algorithm: Algorithm, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { algorithm, master_seed: seed, n_episodes: 3, ..ExperimentConfig::default() };
    cfg.env.room_size = 4;
    cfg.env.max_episode_steps = 32;
    cfg.schedule.k_explore = 8;
    cfg.schedule.k_control = 8;
    cfg.ppo.n_parallel_envs = 2;
    cfg.ppo.hidden = 8;
    cfg
}

#[test]
fn coverage_metrics_are_consistent() {
    for alg in Algorithm::ALL {
        let cfg = tiny(alg, 4);
        let res = run_campaign(&cfg, |_| {}).unwrap();
        assert_eq!(res.records.len(), 3, "{}", alg.name());
        let mut prev = 0;
        for (i, r) in res.records.iter().enumerate() {
            assert_eq!(r.episode, i);
            assert!(r.rooms_cumulative >= prev && r.rooms_cumulative <= cfg.env.n_rooms);
            assert!(r.rooms_episode >= 1.0 && r.rooms_episode <= r.rooms_cumulative as f64);
            assert!(r.switch_presses >= 0.0);
            prev = r.rooms_cumulative;
        }
        assert_eq!(res.visits.len(), res.width * res.height);
        let steps = cfg.episode_steps() + 1;
        let expected = (3 * cfg.ppo.n_parallel_envs * steps) as u64;
        assert_eq!(res.visits.iter().sum::<u64>(), expected, "{}", alg.name());
    }
}

#[test]
fn campaigns_are_reproducible_from_the_seed() {
    let a = run_campaign(&tiny(Algorithm::As, 1), |_| {}).unwrap();
    let b = run_campaign(&tiny(Algorithm::As, 1), |_| {}).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.visits, b.visits);
}

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_advsurprise"));
    c.env_remove("SA_SEED");
    c
}

#[test]
fn cli_train_writes_outputs_and_heatmap_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    let out = dir.path().join("run");
    let text = tiny(Algorithm::Smirl, 2).resolved_text();
    std::fs::write(&cfg_path, text).unwrap();
    let status = cli().args(["train", "-c"]).arg(&cfg_path).arg("-o").arg(&out).status().unwrap();
    assert!(status.success());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
    assert_eq!(metrics.lines().count(), 4);
    let resolved = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.starts_with(SCHEMA_LINE));
    let svg = std::fs::read_to_string(out.join("heatmap_smirl.svg")).unwrap();
    let env = GridEnv::generate(tiny(Algorithm::Smirl, 2).env).unwrap();
    let redrawn = dir.path().join("again.svg");
    let status = cli()
        .arg("heatmap")
        .arg(out.join("visits.csv"))
        .arg("-o")
        .arg(&redrawn)
        .args(["--width", &env.width().to_string(), "--height", &env.height().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(redrawn).unwrap(), svg);
}

#[test]
fn cli_reports_bad_input_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    let out = cli().args(["train", "-c"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = cli().args(["train", "--algorithm", "nope"]).output().unwrap();
    assert!(!out.status.success());
    let out = cli().arg("verify").arg("--n-fixtures").arg("3").arg("-o").arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("verify_report.txt").exists());
}
