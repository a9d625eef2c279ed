use std::fmt::Write as _;
use std::path::Path;

use super::config::{Algorithm, ExperimentConfig};
use super::train::{metrics_csv, run_campaign, CoverageRecord, Trainer};
use crate::error::{Error, Result};

/// Horizons accepted by [`ablate_horizon`].
pub const ABLATION_HORIZONS: [usize; 5] = [2, 4, 8, 16, 32];

/// Runs one configuration and returns its per-episode records.
pub type Runner<'a> = dyn FnMut(&ExperimentConfig) -> Result<Vec<CoverageRecord>> + 'a;

fn default_runner(cfg: &ExperimentConfig) -> Result<Vec<CoverageRecord>> {
    run_campaign(cfg, |_| {}).map(|r| r.records)
}

/// Copies of `cfg` with master seeds `master_seed, master_seed + 1, ...`.
pub fn seed_configs(cfg: &ExperimentConfig, n_seeds: usize) -> Vec<ExperimentConfig> {
    (0..n_seeds as u64)
        .map(|i| ExperimentConfig { master_seed: cfg.master_seed.wrapping_add(i), ..cfg.clone() })
        .collect()
}

/// Mean of `f` over the last tenth of the records (at least one record).
pub fn tail_mean(records: &[CoverageRecord], f: impl Fn(&CoverageRecord) -> f64) -> f64 {
    let k = (records.len() / 10).max(1).min(records.len());
    records[records.len() - k..].iter().map(f).sum::<f64>() / k as f64
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The config of one ablation cell: equal Explore and Control turns of
/// length `horizon`, with as many rounds as fit in the episode.
pub fn horizon_config(cfg: &ExperimentConfig, horizon: usize) -> Result<ExperimentConfig> {
    if !ABLATION_HORIZONS.contains(&horizon) {
        return Err(Error::Config(format!("horizon {horizon} is not one of {ABLATION_HORIZONS:?}")));
    }
    let mut c = cfg.clone();
    c.schedule.k_explore = horizon;
    c.schedule.k_control = horizon;
    c.schedule.rounds = (c.env.max_episode_steps / (2 * horizon)).max(1);
    c.schedule.validate_for(c.env.max_episode_steps)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub horizon: usize,
    /// Final per-episode room coverage of each seed.
    pub per_seed: Vec<f64>,
    pub final_metric: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("horizon,final_metric\n");
    for r in rows {
        writeln!(out, "{},{:.4}", r.horizon, r.final_metric).unwrap();
    }
    out
}

/// Horizon sweep over `cfg.ablate_seeds` seeds, with a caller-supplied runner.
pub fn ablate_horizon_with(cfg: &ExperimentConfig, horizons: &[usize], run: &mut Runner<'_>) -> Result<Vec<AblationRow>> {
    let cells = horizons.iter().map(|&h| horizon_config(cfg, h)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(cells.len());
    for (c, &horizon) in cells.iter().zip(horizons) {
        let per_seed = seed_configs(c, cfg.ablate_seeds)
            .iter()
            .map(|s| run(s).map(|r| tail_mean(&r, |x| x.rooms_episode)))
            .collect::<Result<Vec<_>>>()?;
        let final_metric = mean_stderr(&per_seed).0;
        rows.push(AblationRow { horizon, per_seed, final_metric });
    }
    Ok(rows)
}

/// Repeats training for each horizon and reports final per-episode coverage.
pub fn ablate_horizon(cfg: &ExperimentConfig, horizons: &[usize]) -> Result<Vec<AblationRow>> {
    ablate_horizon_with(cfg, horizons, &mut default_runner)
}

/// Horizon with the best final metric (first one on ties).
pub fn best_horizon(rows: &[AblationRow]) -> Option<usize> {
    rows.iter().fold(None::<&AblationRow>, |b, r| match b {
        Some(b) if b.final_metric >= r.final_metric => Some(b),
        _ => Some(r),
    })
    .map(|r| r.horizon)
}

/// Algorithms compared by [`switch_press_experiment`]; `Random` calibrates.
pub const SWITCH_ALGORITHMS: [Algorithm; 5] =
    [Algorithm::As, Algorithm::AsRoundBuffer, Algorithm::Smirl, Algorithm::Rnd, Algorithm::Random];

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRow {
    pub algorithm: Algorithm,
    /// Mean presses per episode over the last tenth of training, per seed.
    pub per_seed: Vec<f64>,
    pub mean_presses: f64,
    pub stderr: f64,
}

pub fn switch_csv(rows: &[SwitchRow]) -> String {
    let mut out = String::from("algorithm,mean_presses,stderr\n");
    for r in rows {
        writeln!(out, "{},{:.4},{:.4}", r.algorithm.name(), r.mean_presses, r.stderr).unwrap();
    }
    out
}

/// Switch presses per algorithm over `n_seeds` seeds, with a caller-supplied runner.
pub fn switch_press_experiment_with(cfg: &ExperimentConfig, n_seeds: usize, run: &mut Runner<'_>) -> Result<Vec<SwitchRow>> {
    if !cfg.env.with_switch {
        return Err(Error::Config("switch experiment needs an environment with a switch".into()));
    }
    SWITCH_ALGORITHMS
        .iter()
        .map(|&algorithm| {
            let base = ExperimentConfig { algorithm, ..cfg.clone() };
            let per_seed = seed_configs(&base, n_seeds)
                .iter()
                .map(|s| run(s).map(|r| tail_mean(&r, |x| x.switch_presses)))
                .collect::<Result<Vec<_>>>()?;
            let (mean_presses, stderr) = mean_stderr(&per_seed);
            Ok(SwitchRow { algorithm, per_seed, mean_presses, stderr })
        })
        .collect()
}

pub fn switch_press_experiment(cfg: &ExperimentConfig, n_seeds: usize) -> Result<Vec<SwitchRow>> {
    switch_press_experiment_with(cfg, n_seeds, &mut default_runner)
}

/// Runs `cfg.n_episodes` evaluation episodes with the checkpoints in
/// `cfg.replay_from` and writes `metrics.csv` plus the ledger of the first
/// environment's first episode under `cfg.output_dir`.
pub fn replay(cfg: &ExperimentConfig) -> Result<Vec<CoverageRecord>> {
    let dir = cfg.replay_from.as_deref().ok_or_else(|| Error::Config("replay needs replay_from".into()))?;
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.load_checkpoints(dir)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut records = Vec::with_capacity(cfg.n_episodes);
    for i in 0..cfg.n_episodes {
        let (rec, ledgers) = trainer.evaluate_episode()?;
        if i == 0 {
            write_file(&out.join("ledger.csv"), &ledgers[0].to_csv())?;
        }
        records.push(rec);
    }
    write_file(&out.join("metrics.csv"), &metrics_csv(&records))?;
    Ok(records)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
