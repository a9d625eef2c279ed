//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use advsurprise::bmdp::fixtures;
use advsurprise::game::{Decision, PolicyInput};
use advsurprise::learner::tabular::{reinforce_gradient, reinforce_surrogate, rollout, SoftmaxTable};
use advsurprise::learner::{ppo_loss, ppo_loss_and_grad, ActorCritic, NetShape, PPOConfig, PpoAgent, PpoSample, Trajectory};

/// Central finite difference step for gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// The frozen tiny network: 2 one-hot slots, one dense feature, 2 hidden
/// units and 2 actions (23 parameters).
pub fn tiny_shape() -> NetShape {
    NetShape { onehot_dim: 2, dense_dim: 1, hidden: 2, n_actions: 2 }
}

/// Eight transitions with advantages of both signs. Old log-probabilities
/// put half the ratios inside the clip interval and half well outside it,
/// away from the kinks.
/// `(action, old_log_prob, advantage, return)` per transition.
pub type TinyRow = (usize, f64, f64, f64);

pub fn tiny_instance() -> (ActorCritic<f64>, Vec<PolicyInput>, Vec<TinyRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut net = ActorCritic::<f64>::new(tiny_shape(), 1, &mut rng);
    // Scale up the policy head so the logits carry signal.
    for p in net.params_mut().iter_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    let inputs: Vec<PolicyInput> = (0..8)
        .map(|i| PolicyInput { onehot: vec![(i % 2) as u16], dense: vec![i as f32 / 8.0 - 0.4] })
        .collect();
    let refs: Vec<&PolicyInput> = inputs.iter().collect();
    let fwd = net.forward(&refs);
    let mut rows = Vec::new();
    for i in 0..8 {
        let action = i % 2;
        let lp = advsurprise::learner::log_softmax(&fwd.logits[2 * i..2 * i + 2])[action];
        // Ratios 1.05 / 0.95 (inside) or 1.6 / 0.5 (outside) for eps = 0.2.
        let log_ratio = [0.05f64.ln_1p(), (-0.05f64).ln_1p(), 1.6f64.ln(), 0.5f64.ln()][i % 4];
        let adv = if i < 4 { 1.3 } else { -0.7 };
        rows.push((action, lp - log_ratio, adv, 0.25 * i as f64 - 1.0));
    }
    (net, inputs, rows)
}

fn tiny_samples<'a>(inputs: &'a [PolicyInput], rows: &[TinyRow]) -> Vec<PpoSample<'a>> {
    inputs
        .iter()
        .zip(rows)
        .map(|(input, &(action, old_log_prob, advantage, ret))| PpoSample { input, action, old_log_prob, advantage, ret })
        .collect()
}

/// Largest relative error between the analytic clipped-surrogate gradient
/// and central finite differences on the tiny instance, with its parameter count.
#[allow(clippy::needless_range_loop)]
pub fn ppo_fd_max_rel_err() -> (f64, usize) {
    let (net, inputs, rows) = tiny_instance();
    let samples = tiny_samples(&inputs, &rows);
    let (eps, vc, ec) = (0.2, 0.5, 0.01);
    let (_, grad) = ppo_loss_and_grad(&net, &samples, eps, vc, ec);
    let mut worst: f64 = 0.0;
    for k in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[k] += FD_STEP;
        let mut minus = net.clone();
        minus.params_mut()[k] -= FD_STEP;
        let fd = (ppo_loss(&plus, &samples, eps, vc, ec).total - ppo_loss(&minus, &samples, eps, vc, ec).total)
            / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grad[k], fd, 1e-6));
    }
    (worst, net.params().len())
}

/// Largest gap between the clipped loss at a huge `eps` and the unclipped
/// importance-weighted objective.
pub fn unclipped_limit_gap() -> f64 {
    let (net, inputs, rows) = tiny_instance();
    let samples = tiny_samples(&inputs, &rows);
    let refs: Vec<&PolicyInput> = inputs.iter().collect();
    let fwd = net.forward(&refs);
    let direct: f64 = rows
        .iter()
        .enumerate()
        .map(|(i, &(a, old, adv, _))| {
            let lp = advsurprise::learner::log_softmax(&fwd.logits[2 * i..2 * i + 2])[a];
            -(lp - old).exp() * adv
        })
        .sum::<f64>()
        / rows.len() as f64;
    (ppo_loss(&net, &samples, 1e12, 0.5, 0.0).policy - direct).abs()
}

/// Largest relative error of the REINFORCE gradient against finite differences
/// on random tables and rollouts of the four-room chain.
#[allow(clippy::needless_range_loop)]
pub fn tabular_fd_max_rel_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bmdp = fixtures::four_dark_room_chain();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut table = SoftmaxTable::uniform(bmdp.n_states(), bmdp.n_actions());
        table.logits.iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
        let reward = |s: usize, _: usize, _: usize| if s % 2 == 1 { 1.0 } else { -0.5 };
        let episodes: Vec<_> = (0..4).map(|_| rollout(&bmdp, &table, 6, &reward, &mut rng).unwrap()).collect();
        let grad = reinforce_gradient(&table, &episodes, 0.9);
        for k in 0..table.logits.len() {
            let mut plus = table.clone();
            plus.logits[k] += FD_STEP;
            let mut minus = table.clone();
            minus.logits[k] -= FD_STEP;
            let fd = (reinforce_surrogate(&plus, &episodes, 0.9) - reinforce_surrogate(&minus, &episodes, 0.9))
                / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grad[k], fd, 1e-3));
        }
    }
    worst
}

/// One-room goal reaching with a dense shaping reward: the agent and goal
/// start on random cells of a `SIDE x SIDE` room, actions move one cell in a
/// compass direction, and the reward is the decrease in Manhattan distance
/// plus 1 on arrival.
pub struct GoalRoom {
    agent: (usize, usize),
    goal: (usize, usize),
}

impl GoalRoom {
    pub const SIDE: usize = 5;
    pub const MAX_STEPS: usize = 16;
    const CELLS: usize = Self::SIDE * Self::SIDE;

    pub fn shape(hidden: usize) -> NetShape {
        NetShape { onehot_dim: 2 * Self::CELLS, dense_dim: 1, hidden, n_actions: 4 }
    }

    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let cell = |rng: &mut R| (rng.random_range(0..Self::SIDE), rng.random_range(0..Self::SIDE));
        let agent = cell(rng);
        let goal = loop {
            let g = cell(rng);
            if g != agent {
                break g;
            }
        };
        Self { agent, goal }
    }

    fn dist(&self) -> usize {
        self.agent.0.abs_diff(self.goal.0) + self.agent.1.abs_diff(self.goal.1)
    }

    pub fn input(&self, t: usize) -> PolicyInput {
        let a = (self.agent.0 * Self::SIDE + self.agent.1) as u16;
        let g = (Self::CELLS + self.goal.0 * Self::SIDE + self.goal.1) as u16;
        PolicyInput { onehot: vec![a, g], dense: vec![t as f32 / Self::MAX_STEPS as f32] }
    }

    /// Moves and returns `(reward, reached)`.
    pub fn step(&mut self, action: usize) -> (f64, bool) {
        let before = self.dist() as f64;
        let (r, c) = self.agent;
        self.agent = match action {
            0 => (r.saturating_sub(1), c),
            1 => (r, (c + 1).min(Self::SIDE - 1)),
            2 => ((r + 1).min(Self::SIDE - 1), c),
            _ => (r, c.saturating_sub(1)),
        };
        let reached = self.agent == self.goal;
        (before - self.dist() as f64 + if reached { 1.0 } else { 0.0 }, reached)
    }
}

/// Trains PPO on [`GoalRoom`] with 16 episodes per update. Returns the
/// per-update success rates.
pub fn train_goal_room(seed: u64, updates: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PPOConfig { hidden: 64, minibatch_size: 64, learning_rate: 1e-3, ..PPOConfig::default() };
    let mut agent = PpoAgent::new(GoalRoom::shape(cfg.hidden), 2, cfg, &mut rng);
    let n = 16;
    let mut rates = Vec::with_capacity(updates);
    for _ in 0..updates {
        let mut rooms: Vec<GoalRoom> = (0..n).map(|_| GoalRoom::new(&mut rng)).collect();
        let mut inputs: Vec<Vec<PolicyInput>> = vec![Vec::new(); n];
        let mut decisions: Vec<Vec<(Decision, f64)>> = vec![Vec::new(); n];
        let mut done = vec![false; n];
        for t in 0..GoalRoom::MAX_STEPS {
            let live: Vec<usize> = (0..n).filter(|&i| !done[i]).collect();
            if live.is_empty() {
                break;
            }
            let batch: Vec<PolicyInput> = live.iter().map(|&i| rooms[i].input(t)).collect();
            let refs: Vec<&PolicyInput> = batch.iter().collect();
            let ds = agent.act_batch(&refs, &mut rng).unwrap();
            for ((&i, d), input) in live.iter().zip(ds).zip(batch) {
                let (r, reached) = rooms[i].step(d.action);
                inputs[i].push(input);
                decisions[i].push((d, r));
                done[i] = reached;
            }
        }
        rates.push(done.iter().filter(|&&d| d).count() as f64 / n as f64);
        let trajectories: Vec<Trajectory<'_>> = inputs
            .iter()
            .zip(&decisions)
            .map(|(inp, dec)| {
                let mut tr = Trajectory::default();
                for (i, (d, r)) in inp.iter().zip(dec) {
                    tr.push(i, d, *r);
                }
                tr
            })
            .collect();
        agent.update(&trajectories, &mut rng).unwrap();
    }
    rates
}

/// First update (1-based) whose success rate exceeds `threshold`.
pub fn first_success(rates: &[f64], threshold: f64) -> Option<usize> {
    rates.iter().position(|&r| r > threshold).map(|i| i + 1)
}
