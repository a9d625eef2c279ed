//! Exact finite Block MDPs and the theory oracles built on them.
//!
//! A [`TabularBMDP`] is a finite MDP whose latent states emit observations
//! with pairwise-disjoint supports. Everything in this module is an exact
//! computation over such an object: discounted occupancy measures, the
//! observation marginal, Shannon entropies, the entropy-regularized program
//! that a novelty-seeking agent solves, the reachability semimetric, and a
//! brute-force solver for the Explore/Control game.
//!
//! All functions are pure and take their inputs by reference.

mod entropy;
pub mod fixtures;
mod format;
mod game;
mod metric;

pub use entropy::{
    check_entropy_decomposition, check_surprise_bound, entropy, maximize_concave_on_simplex,
    project_to_simplex, rnd_stationary, total_variation, DecompositionCheck, SimplexSolverOptions,
    SurpriseBound,
};
pub use format::{load_bmdp, read_bmdp, write_bmdp};
pub use game::{solve_as_game, AsGameSolution, MAX_GAME_ACTIONS, MAX_GAME_HORIZON, MAX_GAME_STATES};
pub use metric::{
    check_cover_assumption, compute_metric, dark_rooms, t_cover_check, CoverReport, CoverWitness,
    CoverViolation, CoverageCheck, StateMetricTable, ViolatedClause,
};

use crate::error::{Error, Result};

/// Tolerance for row sums of stochastic matrices and distributions.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance for the normalization of occupancy measures.
pub const OCCUPANCY_TOL: f64 = 1e-10;

/// A finite Block MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularBMDP {
    n_states: usize,
    n_actions: usize,
    n_obs: usize,
    /// Row-major `[state][action][next_state]`.
    transition: Vec<f64>,
    /// Row-major `[state][obs]`.
    emission: Vec<f64>,
    init_dist: Vec<f64>,
    discount: f64,
}

fn check_row(row: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution { what: what(), detail: format!("entry {p}") });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDistribution { what: what(), detail: format!("sums to {sum}") });
    }
    Ok(())
}

impl TabularBMDP {
    /// Builds and validates a Block MDP.
    ///
    /// `transition` is indexed `[s][a][s']` and `emission` `[s][o]`, both
    /// flattened row-major. Fails if any row is not a distribution or if two
    /// distinct states can emit the same observation.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_obs: usize,
        transition: Vec<f64>,
        emission: Vec<f64>,
        init_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || n_obs == 0 {
            return Err(Error::Config("BMDP dimensions must be positive".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Config(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if emission.len() != n_states * n_obs {
            return Err(Error::Config(format!(
                "emission has {} entries, expected {}",
                emission.len(),
                n_states * n_obs
            )));
        }
        if init_dist.len() != n_states {
            return Err(Error::Config("init_dist length differs from n_states".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Config(format!("discount {discount} outside [0, 1)")));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let off = (s * n_actions + a) * n_states;
                check_row(&transition[off..off + n_states], || format!("transition({s},{a})"))?;
            }
            check_row(&emission[s * n_obs..(s + 1) * n_obs], || format!("emission({s})"))?;
        }
        check_row(&init_dist, || "init_dist".to_string())?;

        // Disjointness: each observation may be emitted by at most one state.
        for o in 0..n_obs {
            let mut owner: Option<usize> = None;
            for s in 0..n_states {
                if emission[s * n_obs + o] > 0.0 {
                    if let Some(a) = owner {
                        return Err(Error::Disjointness { a, b: s, obs: o });
                    }
                    owner = Some(s);
                }
            }
        }

        Ok(Self { n_states, n_actions, n_obs, transition, emission, init_dist, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }

    /// Next-state distribution for `(state, action)`.
    pub fn transition(&self, state: usize, action: usize) -> &[f64] {
        let off = (state * self.n_actions + action) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    /// Observation distribution `p(O | state)`.
    pub fn emission(&self, state: usize) -> &[f64] {
        &self.emission[state * self.n_obs..(state + 1) * self.n_obs]
    }

    /// Returns a copy with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Config(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self { discount, ..self.clone() })
    }

    /// Returns a copy with a different initial distribution.
    pub fn with_init_dist(&self, init_dist: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.n_obs,
            self.transition.clone(),
            self.emission.clone(),
            init_dist,
            self.discount,
        )
    }

    /// The state emitting `obs`, if any. Unique by disjointness.
    pub fn decode(&self, obs: usize) -> Option<usize> {
        (0..self.n_states).find(|&s| self.emission[s * self.n_obs + obs] > 0.0)
    }

    /// `true` if `transition(state, action)` puts all mass on `next`.
    pub fn is_deterministic_edge(&self, state: usize, action: usize, next: usize) -> bool {
        self.transition(state, action)[next] >= 1.0 - ROW_SUM_TOL
    }

    pub(crate) fn raw_transition(&self) -> &[f64] {
        &self.transition
    }

    pub(crate) fn raw_emission(&self) -> &[f64] {
        &self.emission
    }
}

/// A discounted state-visitation distribution `d^π(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    weights: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("occupancy weights"));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution {
                    what: "occupancy".into(),
                    detail: format!("entry {w}"),
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > OCCUPANCY_TOL {
            return Err(Error::InvalidDistribution {
                what: "occupancy".into(),
                detail: format!("sums to {sum}"),
            });
        }
        Ok(Self { weights })
    }

    /// Point mass on `state`.
    pub fn point(n_states: usize, state: usize) -> Self {
        let mut weights = vec![0.0; n_states];
        weights[state] = 1.0;
        Self { weights }
    }

    pub fn uniform(n_states: usize) -> Self {
        Self { weights: vec![1.0 / n_states as f64; n_states] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A tabular policy over latent states.
#[derive(Debug, Clone, PartialEq)]
pub enum TabularPolicy {
    /// `probs[s][a]`.
    Stationary(Vec<Vec<f64>>),
    /// `probs[t][s][a]` for `t` in `0..horizon`.
    NonStationary(Vec<Vec<Vec<f64>>>),
}

impl TabularPolicy {
    pub fn stationary(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            check_row(row, || format!("policy row {s}"))?;
        }
        Ok(Self::Stationary(probs))
    }

    pub fn nonstationary(probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (t, table) in probs.iter().enumerate() {
            for (s, row) in table.iter().enumerate() {
                check_row(row, || format!("policy row {s} at t={t}"))?;
            }
        }
        Ok(Self::NonStationary(probs))
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::Stationary(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    /// Deterministic stationary policy taking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        Self::Stationary(
            actions
                .iter()
                .map(|&a| {
                    let mut row = vec![0.0; n_actions];
                    row[a] = 1.0;
                    row
                })
                .collect(),
        )
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            Self::Stationary(_) => None,
            Self::NonStationary(p) => Some(p.len()),
        }
    }

    /// Action distribution in `state` at time `t` (ignored if stationary).
    pub fn action_probs(&self, t: usize, state: usize) -> &[f64] {
        match self {
            Self::Stationary(p) => &p[state],
            Self::NonStationary(p) => &p[t][state],
        }
    }
}

/// `P_π[s][s'] = Σ_a π(a|s) T(s'|s,a)` at time `t`.
pub fn policy_transition_matrix(bmdp: &TabularBMDP, policy: &TabularPolicy, t: usize) -> Vec<Vec<f64>> {
    let n = bmdp.n_states();
    let mut p = vec![vec![0.0; n]; n];
    for (s, row) in p.iter_mut().enumerate() {
        let probs = policy.action_probs(t, s);
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (dst, &q) in row.iter_mut().zip(bmdp.transition(s, a)) {
                *dst += pa * q;
            }
        }
    }
    p
}

/// Propagates a state distribution one step under `action`.
pub fn propagate(bmdp: &TabularBMDP, dist: &[f64], action: usize) -> Vec<f64> {
    let mut next = vec![0.0; bmdp.n_states()];
    for (s, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (dst, &q) in next.iter_mut().zip(bmdp.transition(s, action)) {
            *dst += p * q;
        }
    }
    next
}

/// Discounted state marginal `(1-γ) Σ_t γ^t Pr(s_t = s)` of a stationary policy.
///
/// Solved exactly from `(I - γ P_πᵀ) d = (1-γ) p₀` and renormalized.
pub fn state_marginal(bmdp: &TabularBMDP, policy: &TabularPolicy) -> Result<OccupancyMeasure> {
    let TabularPolicy::Stationary(rows) = policy else {
        return Err(Error::Config("state_marginal requires a stationary policy".into()));
    };
    let n = bmdp.n_states();
    if rows.len() != n || rows.iter().any(|r| r.len() != bmdp.n_actions()) {
        return Err(Error::Config("policy shape does not match BMDP".into()));
    }
    let gamma = bmdp.discount();
    let p = policy_transition_matrix(bmdp, policy, 0);
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * p[j][i]
    });
    let b = nalgebra::DVector::from_iterator(n, bmdp.init_dist().iter().map(|&x| (1.0 - gamma) * x));
    let d = a.lu().solve(&b).ok_or(Error::Singular("state marginal"))?;
    let mut weights: Vec<f64> = d.iter().map(|&x| x.max(0.0)).collect();
    let sum: f64 = weights.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(Error::Singular("state marginal"));
    }
    weights.iter_mut().for_each(|w| *w /= sum);
    OccupancyMeasure::new(weights)
}

/// `d(o) = Σ_s p(o|s) d(s)`.
pub fn observation_marginal(bmdp: &TabularBMDP, occ: &OccupancyMeasure) -> Vec<f64> {
    let mut out = vec![0.0; bmdp.n_obs()];
    for (s, &w) in occ.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (dst, &p) in out.iter_mut().zip(bmdp.emission(s)) {
            *dst += w * p;
        }
    }
    out
}

/// `h[s] = H(p(O|s))` in nats.
pub fn emission_entropy_vector(bmdp: &TabularBMDP) -> Vec<f64> {
    (0..bmdp.n_states()).map(|s| entropy(bmdp.emission(s))).collect()
}
