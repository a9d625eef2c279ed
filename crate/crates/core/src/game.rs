//! Episode orchestration for the Explore/Control game and its single-policy
//! relatives.
//!
//! Environments in a batch run in lockstep: every environment follows the
//! same turn schedule, so at each step one policy acts in all of them and can
//! evaluate its network on the whole batch at once.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, ResetMode};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridEnv, GridObservation};

/// Number of past observations a policy sees.
pub const FRAME_STACK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Explore,
    Control,
}

impl Turn {
    pub fn name(self) -> &'static str {
        match self {
            Turn::Explore => "explore",
            Turn::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSchedule {
    pub k_explore: usize,
    pub k_control: usize,
    pub rounds: usize,
    pub first: Turn,
}

impl Default for TurnSchedule {
    fn default() -> Self {
        Self { k_explore: 32, k_control: 32, rounds: 2, first: Turn::Explore }
    }
}

/// One contiguous block of steps taken by one policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnSpan {
    pub turn: Turn,
    pub round: usize,
    pub start: usize,
    pub len: usize,
}

impl TurnSchedule {
    pub fn new(k_explore: usize, k_control: usize, rounds: usize, first: Turn) -> Result<Self> {
        let s = Self { k_explore, k_control, rounds, first };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_explore == 0 || self.k_control == 0 || self.rounds == 0 {
            return Err(Error::Config(format!("turn lengths and rounds must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Checks that the schedule fits into an episode of `max_steps`.
    pub fn validate_for(&self, max_steps: usize) -> Result<()> {
        self.validate()?;
        if self.total_steps() > max_steps {
            return Err(Error::Config(format!(
                "schedule needs {} steps but episodes end after {max_steps}",
                self.total_steps()
            )));
        }
        Ok(())
    }

    /// Turn order. A round is an Explore turn followed by a Control turn;
    /// when Control moves first, round 0 holds only that Control turn.
    pub fn spans(&self) -> Vec<TurnSpan> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut push = |turn: Turn, round: usize, len: usize| {
            out.push(TurnSpan { turn, round, start, len });
            start += len;
        };
        match self.first {
            Turn::Explore => {
                for r in 0..self.rounds {
                    push(Turn::Explore, r, self.k_explore);
                    push(Turn::Control, r, self.k_control);
                }
            }
            Turn::Control => {
                push(Turn::Control, 0, self.k_control);
                for r in 1..self.rounds {
                    push(Turn::Explore, r, self.k_explore);
                    push(Turn::Control, r, self.k_control);
                }
            }
        }
        out
    }

    pub fn total_steps(&self) -> usize {
        self.spans().iter().map(|s| s.len).sum()
    }
}

/// Whether the step at 1-based `offset` within a Control turn of length `k`
/// contributes to the surprise reward (the second half of the turn).
pub fn counted_offset(offset: usize, k: usize) -> bool {
    offset > k / 2
}

/// Network input for one decision: the one-hot indices of the stacked
/// observations plus dense features (density statistic, then time fraction).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub onehot: Vec<u16>,
    pub dense: Vec<f32>,
}

impl PolicyInput {
    /// `frames` is ordered oldest first. Slot `f * cells + c` with class `k`
    /// maps to index `(f * cells + c) * n_classes + k`.
    pub fn build(frames: &[&GridObservation], n_classes: usize, stat: &[f64], t_frac: f64) -> Self {
        let mut onehot = Vec::with_capacity(frames.iter().map(|f| f.cells().len()).sum());
        let mut slot = 0usize;
        for f in frames {
            for &c in f.cells() {
                onehot.push((slot * n_classes + c as usize) as u16);
                slot += 1;
            }
        }
        let mut dense = Vec::with_capacity(stat.len() + 1);
        dense.extend(stat.iter().map(|&x| x as f32));
        dense.push(t_frac as f32);
        Self { onehot, dense }
    }
}

/// A sampled action with the quantities a policy-gradient update needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
}

/// Anything that can choose actions for a batch of inputs.
pub trait Policy {
    fn n_actions(&self) -> usize;
    fn act(&mut self, inputs: &[PolicyInput], rng: &mut ChaCha8Rng) -> Result<Vec<Decision>>;
}

/// Uniformly random actions.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&mut self, inputs: &[PolicyInput], rng: &mut ChaCha8Rng) -> Result<Vec<Decision>> {
        use rand::Rng;
        let lp = -(self.n_actions as f64).ln();
        Ok(inputs
            .iter()
            .map(|_| Decision { action: rng.random_range(0..self.n_actions), log_prob: lp, value: 0.0 })
            .collect())
    }
}

/// Replays a fixed action list, the same in every environment of the batch.
/// Once the list is exhausted it keeps repeating the last action.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub actions: Vec<usize>,
    pub n_actions: usize,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Self {
        Self { actions, n_actions, cursor: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&mut self, inputs: &[PolicyInput], _rng: &mut ChaCha8Rng) -> Result<Vec<Decision>> {
        let a = self.actions.get(self.cursor).or(self.actions.last()).copied().unwrap_or(0);
        self.cursor += 1;
        Ok(inputs.iter().map(|_| Decision { action: a, log_prob: 0.0, value: 0.0 }).collect())
    }
}

/// One environment step as seen by the orchestrator.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub turn: Turn,
    pub round: usize,
    /// Observation after the action.
    pub obs: GridObservation,
    pub action: usize,
    /// Log-likelihood of `obs` under the density model before it was updated.
    pub log_prob: f64,
    pub counted: bool,
    /// Reward credited to the acting policy at this step.
    pub reward: f64,
    pub room: usize,
    /// Agent cell `(row, col)` after the step.
    pub pos: (usize, usize),
    /// Bit `i` set when door `i` is locked after the step.
    pub lock_mask: u64,
    pub switch_toggled: bool,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub r_control: f64,
    pub r_explore: f64,
}

/// Complete record of one episode in one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLedger {
    pub initial_obs: GridObservation,
    pub initial_room: usize,
    pub initial_pos: (usize, usize),
    pub steps: Vec<StepRecord>,
    /// Policy input at each step, parallel to `steps`.
    pub inputs: Vec<PolicyInput>,
    pub rounds: Vec<RoundRecord>,
    pub spans: Vec<TurnSpan>,
}

impl EpisodeLedger {
    pub fn total_control(&self) -> f64 {
        self.rounds.iter().map(|r| r.r_control).sum()
    }

    pub fn total_explore(&self) -> f64 {
        self.rounds.iter().map(|r| r.r_explore).sum()
    }

    /// Distinct rooms visited, including the start room.
    pub fn rooms_visited(&self) -> Vec<usize> {
        let mut rooms: Vec<usize> =
            std::iter::once(self.initial_room).chain(self.steps.iter().map(|s| s.room)).collect();
        rooms.sort_unstable();
        rooms.dedup();
        rooms
    }

    pub fn switch_presses(&self) -> usize {
        self.steps.iter().filter(|s| s.switch_toggled).count()
    }

    /// Mean surprise (negative log-likelihood) over counted steps, or over
    /// all steps when none are counted.
    pub fn mean_counted_surprise(&self) -> f64 {
        let counted: Vec<f64> = self.steps.iter().filter(|s| s.counted).map(|s| -s.log_prob).collect();
        let pool = if counted.is_empty() { self.steps.iter().map(|s| -s.log_prob).collect() } else { counted };
        if pool.is_empty() {
            0.0
        } else {
            pool.iter().sum::<f64>() / pool.len() as f64
        }
    }

    /// Line-per-step CSV: `t,turn,round,action,surprise,counted,reward,room`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,turn,round,action,surprise,counted,reward,room\n");
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.t,
                s.turn.name(),
                s.round,
                s.action,
                -s.log_prob,
                u8::from(s.counted),
                s.reward,
                s.room
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Per-turn undiscounted returns of both players.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnReturns {
    pub explore_returns: Vec<f64>,
    pub control_returns: Vec<f64>,
}

/// Sums each player's rewards per turn. Explore's reward for a round is the
/// negated Control surprise reward, credited at the last step of its turn.
pub fn assign_rewards(ledger: &EpisodeLedger) -> TurnReturns {
    let mut explore_returns = Vec::new();
    let mut control_returns = Vec::new();
    for span in &ledger.spans {
        let sum: f64 = ledger.steps[span.start..span.start + span.len].iter().map(|s| s.reward).sum();
        match span.turn {
            Turn::Explore => explore_returns.push(sum),
            Turn::Control => control_returns.push(sum),
        }
    }
    TurnReturns { explore_returns, control_returns }
}

/// Discounted return-to-go of a reward sequence.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Per-environment rollout state shared by the runners.
struct Lane<'a> {
    env: &'a mut GridEnv,
    model: &'a mut DensityModel,
    frames: Vec<GridObservation>,
    ledger: EpisodeLedger,
    stat: Vec<f64>,
}

fn lock_mask(env: &GridEnv) -> u64 {
    env.state().door_locked.iter().enumerate().fold(0u64, |m, (i, &l)| if l { m | (1 << i) } else { m })
}

fn start_lanes<'a>(
    envs: &'a mut [GridEnv],
    models: &'a mut [DensityModel],
    seeds: &[u64],
    spans: &[TurnSpan],
) -> Result<Vec<Lane<'a>>> {
    if envs.len() != models.len() || envs.len() != seeds.len() || envs.is_empty() {
        return Err(Error::Config(format!(
            "batch mismatch: {} envs, {} models, {} seeds",
            envs.len(),
            models.len(),
            seeds.len()
        )));
    }
    let total: usize = spans.iter().map(|s| s.len).sum();
    let mut lanes = Vec::with_capacity(envs.len());
    for ((env, model), &seed) in envs.iter_mut().zip(models.iter_mut()).zip(seeds) {
        if total > env.config().max_episode_steps {
            return Err(Error::Config(format!(
                "schedule needs {total} steps but episodes end after {}",
                env.config().max_episode_steps
            )));
        }
        let obs = env.reset(seed);
        model.reset();
        model.update(&obs);
        let stat = vec![0.0; model.stat_len()];
        let initial_room = env.room_index(env.state());
        lanes.push(Lane {
            frames: vec![obs.clone(); FRAME_STACK],
            ledger: EpisodeLedger {
                initial_obs: obs,
                initial_room,
                initial_pos: env.state().agent_pos,
                steps: Vec::with_capacity(total),
                inputs: Vec::with_capacity(total),
                rounds: Vec::new(),
                spans: spans.to_vec(),
            },
            env,
            model,
            stat,
        });
    }
    Ok(lanes)
}

/// Builds the inputs, queries `policy` and steps every lane once.
/// Returns the pre-update log-likelihood of each new observation.
fn step_lanes(
    lanes: &mut [Lane<'_>],
    policy: &mut dyn Policy,
    t: usize,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Decision, StepRecord)>> {
    let t_frac = t as f64 / total as f64;
    let inputs: Vec<PolicyInput> = lanes
        .iter_mut()
        .map(|lane| {
            lane.model.write_statistic(&mut lane.stat);
            let frames: Vec<&GridObservation> = lane.frames.iter().collect();
            PolicyInput::build(&frames, lane.env.config().n_cell_classes, &lane.stat, t_frac)
        })
        .collect();
    let decisions = policy.act(&inputs, rng)?;
    let mut out = Vec::with_capacity(lanes.len());
    for ((lane, input), d) in lanes.iter_mut().zip(inputs).zip(decisions) {
        let action = Action::from_index(d.action)?;
        let res = lane.env.step(action)?;
        let lp = lane.model.log_prob(&res.obs);
        lane.model.update(&res.obs);
        lane.frames.remove(0);
        lane.frames.push(res.obs.clone());
        lane.ledger.inputs.push(input);
        out.push((
            d,
            StepRecord {
                t,
                turn: Turn::Control,
                round: 0,
                obs: res.obs,
                action: d.action,
                log_prob: lp,
                counted: false,
                reward: 0.0,
                room: lane.env.room_index(lane.env.state()),
                pos: lane.env.state().agent_pos,
                lock_mask: lock_mask(lane.env),
                switch_toggled: res.switch_toggled,
                decision: d,
            },
        ));
    }
    Ok(out)
}

/// Runs one Explore/Control episode in every environment of the batch.
///
/// At each step the acting policy sees the last [`FRAME_STACK`] observations,
/// the density model's sufficient statistic and the time fraction. The reward
/// `log p(o_{t+1})` is computed before the model is fit to `o_{t+1}`. Control
/// is rewarded on the second half of each of its turns; Explore receives the
/// negated round total at the last step of its turn.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes(
    envs: &mut [GridEnv],
    models: &mut [DensityModel],
    explore: &mut dyn Policy,
    control: &mut dyn Policy,
    schedule: &TurnSchedule,
    reset_mode: ResetMode,
    seeds: &[u64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeLedger>> {
    schedule.validate()?;
    let spans = schedule.spans();
    let total = schedule.total_steps();
    let mut lanes = start_lanes(envs, models, seeds, &spans)?;
    let n_rounds = spans.last().map_or(0, |s| s.round + 1);
    for lane in &mut lanes {
        lane.ledger.rounds = vec![RoundRecord { r_control: 0.0, r_explore: 0.0 }; n_rounds];
    }

    let mut prev_round = 0;
    for span in &spans {
        if reset_mode == ResetMode::PerRound && span.round != prev_round {
            for lane in &mut lanes {
                lane.model.reset();
                let last = lane.frames.last().expect("frames").clone();
                lane.model.update(&last);
            }
        }
        prev_round = span.round;
        for offset in 1..=span.len {
            let t = span.start + offset - 1;
            let policy: &mut dyn Policy = match span.turn {
                Turn::Explore => explore,
                Turn::Control => control,
            };
            let records = step_lanes(&mut lanes, policy, t, total, rng)?;
            for (lane, (_, mut rec)) in lanes.iter_mut().zip(records) {
                rec.turn = span.turn;
                rec.round = span.round;
                if span.turn == Turn::Control && counted_offset(offset, span.len) {
                    rec.counted = true;
                    rec.reward = rec.log_prob;
                    lane.ledger.rounds[span.round].r_control += rec.log_prob;
                }
                lane.ledger.steps.push(rec);
            }
        }
        if span.turn == Turn::Control {
            for lane in &mut lanes {
                let round = &mut lane.ledger.rounds[span.round];
                round.r_explore = -round.r_control;
                let credit = round.r_explore;
                let explore_end = spans
                    .iter()
                    .find(|s| s.turn == Turn::Explore && s.round == span.round)
                    .map(|s| s.start + s.len - 1);
                if let Some(i) = explore_end {
                    lane.ledger.steps[i].reward = credit;
                }
            }
        }
    }
    Ok(lanes.into_iter().map(|l| l.ledger).collect())
}

/// Single-environment convenience wrapper around [`run_episodes`]; action
/// sampling is seeded from `episode_seed`.
pub fn run_episode(
    env: &mut GridEnv,
    explore: &mut dyn Policy,
    control: &mut dyn Policy,
    model: &mut DensityModel,
    schedule: &TurnSchedule,
    reset_mode: ResetMode,
    episode_seed: u64,
) -> Result<EpisodeLedger> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x5eed_5eed);
    let mut ledgers = run_episodes(
        std::slice::from_mut(env),
        std::slice::from_mut(model),
        explore,
        control,
        schedule,
        reset_mode,
        &[episode_seed],
        &mut rng,
    )?;
    Ok(ledgers.pop().expect("one ledger"))
}

/// How a single-policy episode rewards each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleReward {
    /// `log p(o_{t+1})` (surprise minimization).
    LogProb,
    /// Zero; the caller fills in rewards afterwards (e.g. RND).
    External,
}

/// Runs `steps` steps of one policy in every environment of the batch. All
/// steps are recorded as Control steps and counted.
pub fn run_single_policy_episodes(
    envs: &mut [GridEnv],
    models: &mut [DensityModel],
    policy: &mut dyn Policy,
    steps: usize,
    reward: SingleReward,
    seeds: &[u64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeLedger>> {
    if steps == 0 {
        return Err(Error::Config("episode needs at least one step".into()));
    }
    let spans = vec![TurnSpan { turn: Turn::Control, round: 0, start: 0, len: steps }];
    let mut lanes = start_lanes(envs, models, seeds, &spans)?;
    for t in 0..steps {
        let records = step_lanes(&mut lanes, policy, t, steps, rng)?;
        for (lane, (_, mut rec)) in lanes.iter_mut().zip(records) {
            rec.counted = true;
            if reward == SingleReward::LogProb {
                rec.reward = rec.log_prob;
            }
            lane.ledger.steps.push(rec);
        }
    }
    for lane in &mut lanes {
        let r: f64 = lane.ledger.steps.iter().map(|s| s.reward).sum();
        lane.ledger.rounds = vec![RoundRecord { r_control: r, r_explore: -r }];
    }
    Ok(lanes.into_iter().map(|l| l.ledger).collect())
}

/// A surprise-minimizing episode of `env.max_episode_steps` steps.
pub fn run_smirl_episode(
    env: &mut GridEnv,
    policy: &mut dyn Policy,
    model: &mut DensityModel,
    episode_seed: u64,
) -> Result<EpisodeLedger> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x5eed_5eed);
    let steps = env.config().max_episode_steps;
    let mut ledgers = run_single_policy_episodes(
        std::slice::from_mut(env),
        std::slice::from_mut(model),
        policy,
        steps,
        SingleReward::LogProb,
        &[episode_seed],
        &mut rng,
    )?;
    Ok(ledgers.pop().expect("one ledger"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityKind;
    use crate::gridworld::GridConfig;

    fn setup(fraction: f64, max_steps: usize) -> (GridEnv, DensityModel) {
        let cfg = GridConfig {
            n_rooms: 2,
            room_size: 5,
            noisy_cell_fraction: fraction,
            max_episode_steps: max_steps,
            ..GridConfig::default()
        };
        let env = GridEnv::generate(cfg).unwrap();
        let model = DensityModel::new(DensityKind::Categorical, 49, 12, 1.0).unwrap();
        (env, model)
    }

    #[test]
    fn schedule_lengths() {
        let c_first = TurnSchedule::new(32, 32, 2, Turn::Control).unwrap();
        let turns: Vec<Turn> = c_first.spans().iter().map(|s| s.turn).collect();
        assert_eq!(turns, vec![Turn::Control, Turn::Explore, Turn::Control]);
        assert_eq!(c_first.total_steps(), 96);
        let e_first = TurnSchedule::default();
        assert_eq!(e_first.total_steps(), 128);
        assert!(e_first.validate_for(100).is_err());
        assert!(TurnSchedule::new(0, 4, 1, Turn::Explore).is_err());
    }

    #[test]
    fn counted_steps_are_second_half() {
        let counted: Vec<usize> = (1..=32).filter(|&o| counted_offset(o, 32)).collect();
        assert_eq!(counted.len(), 16);
        assert_eq!(counted[0], 17);
        let odd: Vec<usize> = (1..=5).filter(|&o| counted_offset(o, 5)).collect();
        assert_eq!(odd, vec![3, 4, 5]);
    }

    #[test]
    fn episode_follows_schedule_and_is_zero_sum() {
        let (mut env, mut model) = setup(0.3, 128);
        let schedule = TurnSchedule::default();
        let mut e = UniformPolicy { n_actions: 5 };
        let mut c = UniformPolicy { n_actions: 5 };
        let ledger = run_episode(&mut env, &mut e, &mut c, &mut model, &schedule, ResetMode::PerEpisode, 7).unwrap();
        assert_eq!(ledger.steps.len(), 128);
        assert_eq!(ledger.rounds.len(), 2);
        for r in &ledger.rounds {
            assert_eq!(r.r_explore + r.r_control, 0.0);
        }
        for span in &ledger.spans {
            for (i, s) in ledger.steps[span.start..span.start + span.len].iter().enumerate() {
                let expect = span.turn == Turn::Control && i + 1 > span.len / 2;
                assert_eq!(s.counted, expect);
            }
        }
        let rets = assign_rewards(&ledger);
        assert_eq!(rets.explore_returns.len(), 2);
        for (e, c) in rets.explore_returns.iter().zip(&rets.control_returns) {
            assert_eq!(e + c, 0.0);
        }
        // Explore is credited only at the end of its turns.
        let credited: Vec<usize> =
            ledger.steps.iter().filter(|s| s.turn == Turn::Explore && s.reward != 0.0).map(|s| s.t).collect();
        assert_eq!(credited, vec![31, 95]);
    }

    #[test]
    fn control_first_episode_has_96_steps() {
        let (mut env, mut model) = setup(0.3, 96);
        let schedule = TurnSchedule::new(32, 32, 2, Turn::Control).unwrap();
        let mut e = UniformPolicy { n_actions: 5 };
        let mut c = UniformPolicy { n_actions: 5 };
        let ledger = run_episode(&mut env, &mut e, &mut c, &mut model, &schedule, ResetMode::PerEpisode, 1).unwrap();
        assert_eq!(ledger.steps.len(), 96);
        assert_eq!(assign_rewards(&ledger).explore_returns.len(), 1);
        assert!(ledger.steps[0..32].iter().all(|s| s.turn == Turn::Control));
    }

    #[test]
    fn oversized_schedule_is_rejected() {
        let (mut env, mut model) = setup(0.0, 64);
        let mut e = UniformPolicy { n_actions: 5 };
        let mut c = UniformPolicy { n_actions: 5 };
        let r = run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerEpisode, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn invalid_action_is_rejected() {
        let (mut env, mut model) = setup(0.0, 128);
        let mut e = ScriptedPolicy::new(vec![9], 10);
        let mut c = UniformPolicy { n_actions: 5 };
        let r = run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerEpisode, 0);
        assert!(matches!(r, Err(Error::InvalidAction { action: 9, .. })));
    }

    #[test]
    fn constant_observations_match_density_oracle() {
        // Turning in place in a noise-free room repeats four views; staying
        // still via a blocked pickup repeats one view exactly.
        let (mut env, mut model) = setup(0.0, 128);
        let mut e = ScriptedPolicy::new(vec![Action::Pickup as usize], 5);
        let mut c = ScriptedPolicy::new(vec![Action::Pickup as usize], 5);
        let ledger =
            run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerEpisode, 3)
                .unwrap();
        // Oracle: after n identical updates each cell has probability (n+1)/(n+12).
        for s in &ledger.steps {
            let n = (s.t + 1) as f64;
            let expect = 49.0 * ((n + 1.0) / (n + 12.0)).ln();
            assert!((s.log_prob - expect).abs() < 1e-9);
        }
        let counted: Vec<f64> = ledger.steps.iter().filter(|s| s.counted).map(|s| s.reward).collect();
        assert!(counted.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let (mut env, mut model) = setup(0.4, 128);
            let mut e = UniformPolicy { n_actions: 5 };
            let mut c = UniformPolicy { n_actions: 5 };
            run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerRound, 11)
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn round_reset_restarts_the_model() {
        let (mut env, mut model) = setup(0.0, 128);
        let mut e = ScriptedPolicy::new(vec![Action::Pickup as usize], 5);
        let mut c = ScriptedPolicy::new(vec![Action::Pickup as usize], 5);
        let ledger =
            run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerRound, 3)
                .unwrap();
        // The first step of round 1 sees a model fit to a single observation.
        let first_round_1 = &ledger.steps[64];
        assert!((first_round_1.log_prob - 49.0 * (2.0f64 / 13.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn smirl_episode_has_no_explore_steps() {
        let (mut env, mut model) = setup(0.3, 40);
        let mut p = UniformPolicy { n_actions: 5 };
        let ledger = run_smirl_episode(&mut env, &mut p, &mut model, 2).unwrap();
        assert_eq!(ledger.steps.len(), 40);
        assert!(ledger.steps.iter().all(|s| s.turn == Turn::Control && s.counted && s.reward == s.log_prob));
    }

    #[test]
    fn reward_helpers() {
        assert_eq!(returns_to_go(&[1.0, 0.0, 2.0], 0.5), vec![1.5, 1.0, 2.0]);
        let ledger = EpisodeLedger {
            initial_obs: GridObservation::new(1, vec![0]),
            initial_room: 0,
            initial_pos: (0, 0),
            steps: vec![],
            inputs: vec![],
            rounds: vec![],
            spans: vec![],
        };
        assert_eq!(assign_rewards(&ledger).explore_returns, Vec::<f64>::new());
    }

    #[test]
    fn csv_has_one_line_per_step() {
        let (mut env, mut model) = setup(0.2, 128);
        let mut e = UniformPolicy { n_actions: 5 };
        let mut c = UniformPolicy { n_actions: 5 };
        let ledger =
            run_episode(&mut env, &mut e, &mut c, &mut model, &TurnSchedule::default(), ResetMode::PerEpisode, 0)
                .unwrap();
        let csv = ledger.to_csv();
        assert_eq!(csv.lines().count(), 129);
        assert!(csv.starts_with("t,turn,round,action,surprise,counted,reward,room\n0,explore,0,"));
    }
}
