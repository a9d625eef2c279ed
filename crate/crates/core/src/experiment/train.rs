use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, ExperimentConfig};
use super::phases::{behavior_phases, check_phase_env, majority_phase, Phase};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::game::{
    run_episodes, run_single_policy_episodes, EpisodeLedger, Policy, SingleReward, Turn, UniformPolicy, FRAME_STACK,
};
use crate::gridworld::{Action, GridEnv};
use crate::learner::{load_checkpoint, save_checkpoint, NetShape, PpoAgent, RndState, Trajectory, UpdateStats, RND_OUTPUT_DIM};

/// Header of `metrics.csv`.
pub const METRICS_HEADER: &str = "episode,rooms_episode,rooms_cumulative,switch_presses,mean_surprise,phase";

/// Per-episode metrics, aggregated over the parallel environments.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRecord {
    pub episode: usize,
    /// Mean number of distinct rooms visited per environment.
    pub rooms_episode: f64,
    /// Rooms visited by any environment in any episode so far.
    pub rooms_cumulative: usize,
    /// Mean switch toggles per environment.
    pub switch_presses: f64,
    /// Mean surprise over counted steps.
    pub mean_surprise: f64,
    /// Majority phase label, when the environment supports phase detection.
    pub phase: Option<Phase>,
}

impl CoverageRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.4},{},{:.4},{:.4},{}",
            self.episode,
            self.rooms_episode,
            self.rooms_cumulative,
            self.switch_presses,
            self.mean_surprise,
            self.phase.map_or("na", Phase::label)
        )
    }
}

pub fn metrics_csv(records: &[CoverageRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(out, "{}", r.csv_line()).expect("writing to a String cannot fail");
    }
    out
}

/// The learning agents of one run.
#[derive(Debug, Clone)]
pub enum Agents {
    Game { explore: Box<PpoAgent>, control: Box<PpoAgent> },
    Single(Box<PpoAgent>),
    Rnd { policy: Box<PpoAgent>, rnd: Box<RndState> },
    Random,
}

/// A training run in progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub envs: Vec<GridEnv>,
    models: Vec<DensityModel>,
    pub agents: Agents,
    rng: ChaCha8Rng,
    rooms_seen: BTreeSet<usize>,
    pub episode: usize,
    /// Visit counts per grid cell over all environments.
    pub visits: Vec<u64>,
    pub last_stats: Vec<UpdateStats>,
    phases_enabled: bool,
}

/// Network shape for an environment.
pub fn net_shape(cfg: &ExperimentConfig, stat_len: usize) -> NetShape {
    NetShape {
        onehot_dim: FRAME_STACK * cfg.env.obs_cells() * cfg.env.n_cell_classes,
        dense_dim: stat_len + 1,
        hidden: cfg.ppo.hidden,
        n_actions: Action::COUNT,
    }
}

impl Trainer {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
        let n = cfg.ppo.n_parallel_envs;
        let env = GridEnv::generate(cfg.env.clone())?;
        let phases_enabled = check_phase_env(&env).is_ok();
        let envs = vec![env; n];
        let model = DensityModel::new(cfg.density, cfg.env.obs_cells(), cfg.env.n_cell_classes, cfg.alpha)?;
        let shape = net_shape(&cfg, model.stat_len());
        let active = FRAME_STACK * cfg.env.obs_cells();
        let agent = |rng: &mut ChaCha8Rng| Box::new(PpoAgent::new(shape, active, cfg.ppo.clone(), rng));
        let agents = match cfg.algorithm {
            Algorithm::As | Algorithm::AsRoundBuffer => Agents::Game { explore: agent(&mut rng), control: agent(&mut rng) },
            Algorithm::Smirl => Agents::Single(agent(&mut rng)),
            Algorithm::Rnd => {
                let policy = agent(&mut rng);
                let rnd = RndState::new(
                    cfg.env.obs_cells(),
                    cfg.env.n_cell_classes,
                    RND_OUTPUT_DIM,
                    cfg.rnd_learning_rate,
                    &mut rng,
                );
                Agents::Rnd { policy, rnd: Box::new(rnd) }
            }
            Algorithm::Random => Agents::Random,
        };
        let visits = vec![0; envs[0].width() * envs[0].height()];
        Ok(Self {
            models: vec![model; n],
            envs,
            agents,
            rng,
            rooms_seen: BTreeSet::new(),
            episode: 0,
            visits,
            last_stats: Vec::new(),
            phases_enabled,
            cfg,
        })
    }

    fn collect(&mut self, seeds: &[u64]) -> Result<Vec<EpisodeLedger>> {
        let steps = self.cfg.episode_steps();
        let reset_mode = self.cfg.algorithm.reset_mode();
        match &mut self.agents {
            Agents::Game { explore, control } => run_episodes(
                &mut self.envs,
                &mut self.models,
                explore.as_mut(),
                control.as_mut(),
                &self.cfg.schedule,
                reset_mode,
                seeds,
                &mut self.rng,
            ),
            Agents::Single(p) => run_single_policy_episodes(
                &mut self.envs,
                &mut self.models,
                p.as_mut(),
                steps,
                SingleReward::LogProb,
                seeds,
                &mut self.rng,
            ),
            Agents::Rnd { policy, .. } => run_single_policy_episodes(
                &mut self.envs,
                &mut self.models,
                policy.as_mut(),
                steps,
                SingleReward::External,
                seeds,
                &mut self.rng,
            ),
            Agents::Random => {
                let mut p = UniformPolicy { n_actions: Action::COUNT };
                run_single_policy_episodes(
                    &mut self.envs,
                    &mut self.models,
                    &mut p as &mut dyn Policy,
                    steps,
                    SingleReward::LogProb,
                    seeds,
                    &mut self.rng,
                )
            }
        }
    }

    fn learn(&mut self, ledgers: &mut [EpisodeLedger]) -> Result<Vec<UpdateStats>> {
        match &mut self.agents {
            Agents::Game { explore, control } => {
                let mut te = Vec::with_capacity(ledgers.len());
                let mut tc = Vec::with_capacity(ledgers.len());
                for l in ledgers.iter() {
                    let mut e = Trajectory::default();
                    let mut c = Trajectory::default();
                    for (s, inp) in l.steps.iter().zip(&l.inputs) {
                        match s.turn {
                            Turn::Explore => e.push(inp, &s.decision, s.reward),
                            Turn::Control => c.push(inp, &s.decision, s.reward),
                        }
                    }
                    te.push(e);
                    tc.push(c);
                }
                Ok(vec![explore.update(&te, &mut self.rng)?, control.update(&tc, &mut self.rng)?])
            }
            Agents::Single(p) => Ok(vec![p.update(&single_trajectories(ledgers), &mut self.rng)?]),
            Agents::Rnd { policy, rnd } => {
                let errors: Vec<f64> = ledgers.iter().flat_map(|l| l.steps.iter().map(|s| rnd.raw_error(&s.obs))).collect();
                rnd.observe_errors(&errors);
                for l in ledgers.iter_mut() {
                    for s in &mut l.steps {
                        s.reward = rnd.rnd_reward(&s.obs);
                    }
                }
                let obs: Vec<_> = ledgers.iter().flat_map(|l| l.steps.iter().map(|s| &s.obs)).collect();
                for chunk in obs.chunks(self.cfg.ppo.minibatch_size) {
                    rnd.train(chunk);
                }
                Ok(vec![policy.update(&single_trajectories(ledgers), &mut self.rng)?])
            }
            Agents::Random => Ok(Vec::new()),
        }
    }

    /// Runs one episode in every environment, updates the agents and returns
    /// the episode's metrics.
    pub fn step_episode(&mut self) -> Result<(CoverageRecord, Vec<EpisodeLedger>)> {
        let (record, mut ledgers) = self.evaluate_episode()?;
        match self.learn(&mut ledgers) {
            Ok(stats) => self.last_stats = stats,
            Err(e @ Error::Numeric(_)) => {
                let dump = self.cfg.output_dir.join("nan_ledger.csv");
                // Best effort: the numeric error is what gets reported.
                let _ = std::fs::create_dir_all(&self.cfg.output_dir)
                    .and_then(|_| std::fs::write(&dump, ledgers[0].to_csv()));
                return Err(e);
            }
            Err(e) => return Err(e),
        }
        Ok((record, ledgers))
    }

    /// Runs one episode in every environment without learning.
    pub fn evaluate_episode(&mut self) -> Result<(CoverageRecord, Vec<EpisodeLedger>)> {
        let seeds: Vec<u64> = (0..self.envs.len()).map(|_| self.rng.random()).collect();
        let ledgers = self.collect(&seeds)?;
        let width = self.envs[0].width();
        for l in &ledgers {
            self.visits[l.initial_pos.0 * width + l.initial_pos.1] += 1;
            for s in &l.steps {
                self.visits[s.pos.0 * width + s.pos.1] += 1;
            }
        }
        let record = self.record(&ledgers)?;
        self.episode += 1;
        Ok((record, ledgers))
    }

    fn record(&mut self, ledgers: &[EpisodeLedger]) -> Result<CoverageRecord> {
        let n = ledgers.len() as f64;
        let mut rooms_episode = 0.0;
        for l in ledgers {
            let rooms = l.rooms_visited();
            rooms_episode += rooms.len() as f64 / n;
            self.rooms_seen.extend(rooms);
        }
        let phase = if self.phases_enabled && self.cfg.algorithm.is_game() {
            Some(majority_phase(&behavior_phases(&self.envs[0], ledgers)?))
        } else {
            None
        };
        Ok(CoverageRecord {
            episode: self.episode,
            rooms_episode,
            rooms_cumulative: self.rooms_seen.len(),
            switch_presses: ledgers.iter().map(|l| l.switch_presses() as f64).sum::<f64>() / n,
            mean_surprise: ledgers.iter().map(EpisodeLedger::mean_counted_surprise).sum::<f64>() / n,
            phase,
        })
    }

    /// Replaces the networks with the final checkpoints written by
    /// [`Trainer::save_checkpoints`] under `dir`.
    pub fn load_checkpoints(&mut self, dir: &Path) -> Result<()> {
        let ppo = self.cfg.ppo.clone();
        let load = |name: &str| load_checkpoint(&dir.join(name), ppo.clone()).map(Box::new);
        match &mut self.agents {
            Agents::Game { explore, control } => {
                *explore = load("explore_final.bin")?;
                *control = load("control_final.bin")?;
            }
            Agents::Single(p) | Agents::Rnd { policy: p, .. } => *p = load("policy_final.bin")?,
            Agents::Random => {}
        }
        Ok(())
    }

    /// Writes the current networks under `dir`.
    pub fn save_checkpoints(&self, dir: &Path, tag: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        match &self.agents {
            Agents::Game { explore, control } => {
                save_checkpoint(explore, &dir.join(format!("explore_{tag}.bin")))?;
                save_checkpoint(control, &dir.join(format!("control_{tag}.bin")))
            }
            Agents::Single(p) | Agents::Rnd { policy: p, .. } => save_checkpoint(p, &dir.join(format!("policy_{tag}.bin"))),
            Agents::Random => Ok(()),
        }
    }
}

fn single_trajectories(ledgers: &[EpisodeLedger]) -> Vec<Trajectory<'_>> {
    ledgers
        .iter()
        .map(|l| {
            let mut t = Trajectory::default();
            for (s, inp) in l.steps.iter().zip(&l.inputs) {
                t.push(inp, &s.decision, s.reward);
            }
            t
        })
        .collect()
}

/// Output of a finished training run.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub records: Vec<CoverageRecord>,
    pub visits: Vec<u64>,
    pub width: usize,
    pub height: usize,
    /// Per-episode phase labels of every environment (empty when phase
    /// detection does not apply).
    pub env_phases: Vec<Vec<Phase>>,
}

/// Trains for `cfg.n_episodes` without touching the file system.
pub fn run_campaign(cfg: &ExperimentConfig, mut on_episode: impl FnMut(&CoverageRecord)) -> Result<CampaignResult> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.n_episodes);
    let mut env_phases = Vec::new();
    for _ in 0..cfg.n_episodes {
        let (rec, ledgers) = trainer.step_episode()?;
        if trainer.phases_enabled && cfg.algorithm.is_game() {
            env_phases.push(behavior_phases(&trainer.envs[0], &ledgers)?);
        }
        on_episode(&rec);
        records.push(rec);
    }
    Ok(CampaignResult {
        records,
        width: trainer.envs[0].width(),
        height: trainer.envs[0].height(),
        visits: trainer.visits,
        env_phases,
    })
}

/// Trains and writes `metrics.csv`, `resolved_config.txt`, a visit heatmap
/// and checkpoints under `cfg.output_dir`.
pub fn train_campaign(cfg: &ExperimentConfig) -> Result<Vec<CoverageRecord>> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = out.join("resolved_config.txt");
    std::fs::write(&resolved, cfg.resolved_text()).map_err(|e| Error::io(&resolved, e))?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.n_episodes);
    let ckpt = out.join("ckpt");
    for _ in 0..cfg.n_episodes {
        let (rec, _) = trainer.step_episode()?;
        records.push(rec);
        if cfg.checkpoint_every > 0 && trainer.episode % cfg.checkpoint_every == 0 {
            trainer.save_checkpoints(&ckpt, &format!("{:06}", trainer.episode))?;
        }
    }
    trainer.save_checkpoints(&ckpt, "final")?;
    let metrics = out.join("metrics.csv");
    std::fs::write(&metrics, metrics_csv(&records)).map_err(|e| Error::io(&metrics, e))?;
    let visits = out.join("visits.csv");
    std::fs::write(&visits, visits_csv(&trainer.visits, trainer.envs[0].width()))
        .map_err(|e| Error::io(&visits, e))?;
    let svg = super::heatmap::heatmap_svg(&trainer.visits, trainer.envs[0].width(), trainer.envs[0].height())?;
    let heat = out.join(format!("heatmap_{}.svg", cfg.algorithm.name()));
    std::fs::write(&heat, svg).map_err(|e| Error::io(&heat, e))?;
    Ok(records)
}

/// Nonzero visit counts as `row,col,count` lines.
pub fn visits_csv(counts: &[u64], width: usize) -> String {
    let mut out = String::from("row,col,count\n");
    for (i, &n) in counts.iter().enumerate().filter(|(_, &n)| n > 0) {
        writeln!(out, "{},{},{n}", i / width, i % width).expect("writing to a String cannot fail");
    }
    out
}
