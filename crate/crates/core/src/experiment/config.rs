use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::{DensityKind, ResetMode, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::game::TurnSchedule;
use crate::gridworld::GridConfig;
use crate::learner::PPOConfig;

/// First line of every config file written by this crate.
pub const SCHEMA_LINE: &str = "# schema: advsurprise experiment config v1 (see README, section Configuration)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Verify,
    #[default]
    Train,
    Ablate,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Explore and Control policies playing the surprise game.
    #[default]
    As,
    /// As `As`, with the density model reset at every round.
    AsRoundBuffer,
    /// One policy minimizing its own surprise.
    Smirl,
    /// One policy maximizing random-network-distillation novelty.
    Rnd,
    /// Uniformly random actions, no learning.
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::As, Algorithm::AsRoundBuffer, Algorithm::Smirl, Algorithm::Rnd, Algorithm::Random];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::As => "as",
            Algorithm::AsRoundBuffer => "as_round_buffer",
            Algorithm::Smirl => "smirl",
            Algorithm::Rnd => "rnd",
            Algorithm::Random => "random",
        }
    }

    pub fn reset_mode(self) -> ResetMode {
        match self {
            Algorithm::AsRoundBuffer => ResetMode::PerRound,
            _ => ResetMode::PerEpisode,
        }
    }

    pub fn is_game(self) -> bool {
        matches!(self, Algorithm::As | Algorithm::AsRoundBuffer)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub algorithm: Algorithm,
    /// Training iterations; each runs one episode in every parallel environment.
    pub n_episodes: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Write checkpoints every this many episodes (0: only at the end).
    pub checkpoint_every: usize,
    pub density: DensityKind,
    pub alpha: f64,
    pub rnd_learning_rate: f64,
    /// Extra BMDP file checked by `verify`.
    pub fixture: Option<PathBuf>,
    pub n_fixtures: usize,
    /// Turn lengths swept by `ablate`.
    pub horizons: Vec<usize>,
    pub ablate_seeds: usize,
    /// Checkpoint directory read by `replay`.
    pub replay_from: Option<PathBuf>,
    pub env: GridConfig,
    pub schedule: TurnSchedule,
    pub ppo: PPOConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            algorithm: Algorithm::As,
            n_episodes: 2000,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            checkpoint_every: 0,
            density: DensityKind::Categorical,
            alpha: DEFAULT_ALPHA,
            rnd_learning_rate: 1e-3,
            fixture: None,
            n_fixtures: 50,
            horizons: vec![2, 4, 8, 16, 32],
            ablate_seeds: 3,
            replay_from: None,
            env: GridConfig::default(),
            schedule: TurnSchedule::default(),
            ppo: PPOConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config and applies the `SA_SEED` override.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if let Ok(seed) = std::env::var("SA_SEED") {
            cfg.master_seed = seed.trim().parse().map_err(|e| Error::Config(format!("SA_SEED='{seed}': {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.algorithm.is_game() {
            self.schedule.validate_for(self.env.max_episode_steps)?;
        }
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be positive".into()));
        }
        if let Some(p) = self.fixture.as_ref().filter(|p| !p.exists()) {
            return Err(Error::Config(format!("fixture {} does not exist", p.display())));
        }
        if let Some(p) = self.replay_from.as_ref().filter(|p| !p.exists()) {
            return Err(Error::Config(format!("replay directory {} does not exist", p.display())));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }

    /// Episode length used by single-policy algorithms: the game's length,
    /// so that every algorithm sees the same number of steps.
    pub fn episode_steps(&self) -> usize {
        self.schedule.total_steps().min(self.env.max_episode_steps)
    }

    /// The fully resolved config, prefixed by the schema line.
    pub fn resolved_text(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!("{SCHEMA_LINE}\n{body}")
    }
}
