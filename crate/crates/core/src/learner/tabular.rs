//! REINFORCE with a softmax table, for small exact problems.

use rand::Rng;

use crate::bmdp::TabularBMDP;
use crate::error::{Error, Result};

/// Softmax policy with one logit per (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

impl SoftmaxTable {
    /// All logits zero: uniform in every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, logits: vec![0.0; n_states * n_actions] }
    }

    pub fn probs(&self, state: usize) -> Vec<f64> {
        let row = &self.logits[state * self.n_actions..(state + 1) * self.n_actions];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let p = self.probs(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, q) in p.iter().enumerate() {
            acc += q;
            if u < acc {
                return a;
            }
        }
        self.n_actions - 1
    }
}

/// The REINFORCE surrogate `mean over episodes of sum_t G_t log pi(a_t | s_t)`
/// with returns held fixed. Its gradient is the policy-gradient estimate.
pub fn reinforce_surrogate(table: &SoftmaxTable, episodes: &[Vec<TabularStep>], gamma: f64) -> f64 {
    let mut total = 0.0;
    for ep in episodes {
        let rewards: Vec<f64> = ep.iter().map(|s| s.reward).collect();
        let g = crate::game::returns_to_go(&rewards, gamma);
        for (step, gt) in ep.iter().zip(g) {
            total += gt * table.probs(step.state)[step.action].ln();
        }
    }
    total / episodes.len().max(1) as f64
}

/// Gradient of [`reinforce_surrogate`] with respect to the logits.
pub fn reinforce_gradient(table: &SoftmaxTable, episodes: &[Vec<TabularStep>], gamma: f64) -> Vec<f64> {
    let mut grad = vec![0.0; table.logits.len()];
    let inv = 1.0 / episodes.len().max(1) as f64;
    for ep in episodes {
        let rewards: Vec<f64> = ep.iter().map(|s| s.reward).collect();
        let g = crate::game::returns_to_go(&rewards, gamma);
        for (step, gt) in ep.iter().zip(g) {
            let p = table.probs(step.state);
            for (a, pa) in p.iter().enumerate() {
                let onehot = if a == step.action { 1.0 } else { 0.0 };
                grad[step.state * table.n_actions + a] += inv * gt * (onehot - pa);
            }
        }
    }
    grad
}

/// One gradient-ascent step of size `lr`.
pub fn tabular_pg_update(table: &SoftmaxTable, episodes: &[Vec<TabularStep>], lr: f64, gamma: f64) -> SoftmaxTable {
    let grad = reinforce_gradient(table, episodes, gamma);
    let mut next = table.clone();
    for (l, g) in next.logits.iter_mut().zip(grad) {
        *l += lr * g;
    }
    next
}

/// Samples an episode of `horizon` steps from the BMDP's initial distribution.
/// `reward(s, a, s_next)` gives the per-step reward.
pub fn rollout<R: Rng + ?Sized>(
    bmdp: &TabularBMDP,
    table: &SoftmaxTable,
    horizon: usize,
    reward: &dyn Fn(usize, usize, usize) -> f64,
    rng: &mut R,
) -> Result<Vec<TabularStep>> {
    if table.n_states != bmdp.n_states() || table.n_actions != bmdp.n_actions() {
        return Err(Error::Config(format!(
            "table is {}x{} but the BMDP has {} states and {} actions",
            table.n_states,
            table.n_actions,
            bmdp.n_states(),
            bmdp.n_actions()
        )));
    }
    let draw = |p: &[f64], rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, q) in p.iter().enumerate() {
            acc += q;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    };
    let mut s = draw(bmdp.init_dist(), rng);
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a = table.sample(s, rng);
        let next = draw(bmdp.transition(s, a), rng);
        out.push(TabularStep { state: s, action: a, reward: reward(s, a, next) });
        s = next;
    }
    Ok(out)
}
