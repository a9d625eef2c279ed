use super::entropy::{entropy, maximize_concave_on_simplex, SimplexSolverOptions};
use super::{propagate, OccupancyMeasure, TabularBMDP};
use crate::error::{Error, Result};

pub const MAX_GAME_STATES: usize = 8;
pub const MAX_GAME_ACTIONS: usize = 3;
pub const MAX_GAME_HORIZON: usize = 4;

/// Control's plans count as strictly better only beyond this margin.
const TIE_TOL: f64 = 1e-12;

/// Equilibrium of the Explore/Control game on a small BMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct AsGameSolution {
    /// Explore's distribution over the state handed to Control.
    pub explore_init: Vec<f64>,
    /// Control's open-loop action sequence from each start state.
    pub control_plans: Vec<Vec<usize>>,
    /// State distribution at step `T` induced by both players.
    pub induced_marginal: OccupancyMeasure,
    /// Entropy of the induced step-`T` observation distribution.
    pub value: f64,
}

struct PlanOutcome {
    actions: Vec<usize>,
    states: Vec<f64>,
    observations: Vec<f64>,
    entropy: f64,
}

fn emit(bmdp: &TabularBMDP, states: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; bmdp.n_obs()];
    for (s, &p) in states.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (dst, &q) in out.iter_mut().zip(bmdp.emission(s)) {
            *dst += p * q;
        }
    }
    out
}

/// Control's best response from `start`: the action sequence of length
/// `horizon` whose step-`horizon` observation distribution has least entropy.
/// Sequences are enumerated in lexicographic order and ties keep the first.
fn best_plan(bmdp: &TabularBMDP, start: usize, horizon: usize) -> PlanOutcome {
    let n_actions = bmdp.n_actions();
    let total = n_actions.pow(horizon as u32);
    let mut best: Option<PlanOutcome> = None;
    let mut actions = vec![0usize; horizon];
    for code in 0..total {
        let mut c = code;
        for slot in actions.iter_mut().rev() {
            *slot = c % n_actions;
            c /= n_actions;
        }
        let mut dist = vec![0.0; bmdp.n_states()];
        dist[start] = 1.0;
        for &a in &actions {
            dist = propagate(bmdp, &dist, a);
        }
        let observations = emit(bmdp, &dist);
        let h = entropy(&observations);
        if best.as_ref().is_none_or(|b| h < b.entropy - TIE_TOL) {
            best = Some(PlanOutcome { actions: actions.clone(), states: dist, observations, entropy: h });
        }
    }
    best.expect("at least one plan")
}

/// Solves `max_{start dist} min_{Control} H(d_T(o))` by brute force.
///
/// Control's best response is found by enumerating all `|A|^T` action
/// sequences from every start state. Explore then maximizes the entropy of the
/// mixture of the resulting observation distributions over the simplex of
/// start distributions, which is a concave problem.
pub fn solve_as_game(bmdp: &TabularBMDP, horizon: usize) -> Result<AsGameSolution> {
    if bmdp.n_states() > MAX_GAME_STATES || bmdp.n_actions() > MAX_GAME_ACTIONS || horizon > MAX_GAME_HORIZON {
        return Err(Error::Envelope(format!(
            "{} states, {} actions, horizon {} (limits {MAX_GAME_STATES}, {MAX_GAME_ACTIONS}, {MAX_GAME_HORIZON})",
            bmdp.n_states(),
            bmdp.n_actions(),
            horizon
        )));
    }
    let n = bmdp.n_states();
    let outcomes: Vec<PlanOutcome> = (0..n).map(|s| best_plan(bmdp, s, horizon)).collect();

    let mix = |mu: &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; bmdp.n_obs()];
        for (w, out) in mu.iter().zip(&outcomes) {
            if *w == 0.0 {
                continue;
            }
            for (dst, &q) in m.iter_mut().zip(&out.observations) {
                *dst += w * q;
            }
        }
        m
    };
    let objective = |mu: &[f64]| entropy(&mix(mu));
    let gradient = |mu: &[f64]| {
        let m = mix(mu);
        let log_m: Vec<f64> = m.iter().map(|&p| p.max(1e-300).ln() + 1.0).collect();
        outcomes
            .iter()
            .map(|out| -out.observations.iter().zip(&log_m).map(|(q, l)| q * l).sum::<f64>())
            .collect::<Vec<f64>>()
    };
    let (explore_init, value) = maximize_concave_on_simplex(n, objective, gradient, &SimplexSolverOptions::default());

    let mut induced = vec![0.0; n];
    for (w, out) in explore_init.iter().zip(&outcomes) {
        for (dst, &p) in induced.iter_mut().zip(&out.states) {
            *dst += w * p;
        }
    }
    let z: f64 = induced.iter().sum();
    induced.iter_mut().for_each(|p| *p /= z);

    Ok(AsGameSolution {
        explore_init,
        control_plans: outcomes.into_iter().map(|o| o.actions).collect(),
        induced_marginal: OccupancyMeasure::new(induced)?,
        value,
    })
}
