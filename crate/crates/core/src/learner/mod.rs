//! Policy optimization: a shared-trunk actor-critic trained with a clipped
//! surrogate objective, the RND novelty baseline, and a tabular softmax
//! policy gradient for small exact problems.

mod checkpoint;
mod net;
mod ppo;
mod rnd;
mod scalar;
pub mod tabular;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{log_softmax, ActorCritic, Forward, NetShape};
pub use ppo::{
    gae, logit_grad, ppo_loss, ppo_loss_and_grad, Adam, LossParts, PpoAgent, PpoSample, RunningStat, Trajectory,
    UpdateStats,
};
pub use rnd::{RndState, RND_OUTPUT_DIM};
pub use scalar::Scalar;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub n_parallel_envs: usize,
    pub hidden: usize,
    pub max_grad_norm: f64,
    /// Divide rewards by a running standard deviation of discounted returns.
    pub normalize_rewards: bool,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            gamma: 0.99,
            epochs: 4,
            minibatch_size: 512,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            n_parallel_envs: 16,
            hidden: 128,
            max_grad_norm: 0.5,
            normalize_rewards: true,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail("clip_epsilon must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.n_parallel_envs == 0 || self.hidden == 0 {
            return fail("epochs, minibatch_size, n_parallel_envs and hidden must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return fail("learning_rate and max_grad_norm must be positive");
        }
        Ok(())
    }
}
