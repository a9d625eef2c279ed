use std::collections::VecDeque;

use super::{emission_entropy_vector, OccupancyMeasure, TabularBMDP};

/// Emission entropies within this distance of the minimum count as minimal.
pub const DARK_ROOM_TOL: f64 = 1e-12;
/// Occupancy mass above which a state counts as visited.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Reachability quasimetric and its max-symmetrization.
///
/// `quasi[s][s']` is the least `k` such that some action sequence moves `s` to
/// `s'` in `k` steps with probability one, using only deterministic edges.
/// `None` stands for unreachable within the horizon bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMetricTable {
    quasi: Vec<Vec<Option<usize>>>,
    sym: Vec<Vec<Option<usize>>>,
}

fn max_dist(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    Some(a?.max(b?))
}

impl StateMetricTable {
    pub fn from_quasi(quasi: Vec<Vec<Option<usize>>>) -> Self {
        let n = quasi.len();
        let sym = (0..n).map(|s| (0..n).map(|t| max_dist(quasi[s][t], quasi[t][s])).collect()).collect();
        Self { quasi, sym }
    }

    pub fn n_states(&self) -> usize {
        self.quasi.len()
    }

    pub fn quasi(&self, from: usize, to: usize) -> Option<usize> {
        self.quasi[from][to]
    }

    pub fn sym(&self, a: usize, b: usize) -> Option<usize> {
        self.sym[a][b]
    }

    fn within(d: Option<usize>, horizon: usize) -> bool {
        d.is_some_and(|d| d <= horizon)
    }
}

/// Shortest deterministic-path distances, truncated at `max_k`.
pub fn compute_metric(bmdp: &TabularBMDP, max_k: usize) -> StateMetricTable {
    let n = bmdp.n_states();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let mut out: Vec<usize> = (0..bmdp.n_actions())
                .flat_map(|a| (0..n).filter(move |&t| bmdp.is_deterministic_edge(s, a, t)))
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect();

    let quasi = (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(s) = queue.pop_front() {
                let d = dist[s].expect("queued states have a distance");
                if d == max_k {
                    continue;
                }
                for &t in &succ[s] {
                    if dist[t].is_none() {
                        dist[t] = Some(d + 1);
                        queue.push_back(t);
                    }
                }
            }
            dist
        })
        .collect();
    StateMetricTable::from_quasi(quasi)
}

/// States of minimal emission entropy, ascending.
pub fn dark_rooms(bmdp: &TabularBMDP) -> Vec<usize> {
    let h = emission_entropy_vector(bmdp);
    let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..h.len()).filter(|&s| h[s] - min <= DARK_ROOM_TOL).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverWitness {
    pub dark_room: usize,
    pub distance: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolatedClause {
    /// No dark room within symmetric distance `T`.
    Cover,
    /// No dark room reachable with probability one in exactly `T` steps.
    ExactReach,
    /// A dark room is reachable within `T` but cannot reach back within `T`.
    Return { dark_room: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverViolation {
    pub state: usize,
    pub clause: ViolatedClause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    pub holds: bool,
    /// Nearest dark room under the symmetric metric, per state.
    pub witnesses: Vec<Option<CoverWitness>>,
    pub violations: Vec<CoverViolation>,
}

fn has_self_loop(bmdp: &TabularBMDP, s: usize) -> bool {
    (0..bmdp.n_actions()).any(|a| bmdp.is_deterministic_edge(s, a, s))
}

/// Checks the three dark-room density conditions for horizon `horizon`:
/// (a) a dark room within symmetric distance `T`, (b) a dark room reachable in
/// exactly `T` steps (a deterministic path of length at most `T` followed by a
/// deterministic self-loop), and (c) every dark room within quasi-distance `T`
/// is also within symmetric distance `T`.
pub fn check_cover_assumption(bmdp: &TabularBMDP, horizon: usize) -> CoverReport {
    let n = bmdp.n_states();
    let metric = compute_metric(bmdp, horizon.max(n));
    let dark = dark_rooms(bmdp);
    let looped: Vec<bool> = (0..n).map(|s| has_self_loop(bmdp, s)).collect();
    let mut witnesses = Vec::with_capacity(n);
    let mut violations = Vec::new();

    for s in 0..n {
        let witness = dark
            .iter()
            .filter_map(|&d| metric.sym(s, d).map(|dist| CoverWitness { dark_room: d, distance: dist }))
            .min_by_key(|w| (w.distance, w.dark_room));
        if !witness.is_some_and(|w| w.distance <= horizon) {
            violations.push(CoverViolation { state: s, clause: ViolatedClause::Cover });
        }
        witnesses.push(witness);

        let exact = dark.iter().any(|&d| looped[d] && StateMetricTable::within(metric.quasi(s, d), horizon));
        if !exact {
            violations.push(CoverViolation { state: s, clause: ViolatedClause::ExactReach });
        }

        for &d in &dark {
            if StateMetricTable::within(metric.quasi(s, d), horizon)
                && !StateMetricTable::within(metric.sym(s, d), horizon)
            {
                violations.push(CoverViolation { state: s, clause: ViolatedClause::Return { dark_room: d } });
            }
        }
    }
    CoverReport { holds: violations.is_empty(), witnesses, violations }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageCheck {
    pub covered: bool,
    pub uncovered_states: Vec<usize>,
}

/// Whether the support of `marginal` is a `T`-cover under the symmetric metric.
pub fn t_cover_check(marginal: &OccupancyMeasure, metric: &StateMetricTable, horizon: usize) -> CoverageCheck {
    let n = metric.n_states();
    let support: Vec<usize> = (0..n).filter(|&s| marginal.weights()[s] > SUPPORT_TOL).collect();
    let uncovered_states: Vec<usize> = (0..n)
        .filter(|&s| !support.iter().any(|&t| StateMetricTable::within(metric.sym(s, t), horizon)))
        .collect();
    CoverageCheck { covered: uncovered_states.is_empty(), uncovered_states }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmdp::fixtures;

    fn chain(back_edges: bool) -> TabularBMDP {
        // Actions: 0 = stay, 1 = forward, 2 = back (stay if disabled).
        let n = 3;
        let mut t = vec![0.0; n * 3 * n];
        for s in 0..n {
            t[(s * 3) * n + s] = 1.0;
            t[(s * 3 + 1) * n + (s + 1).min(n - 1)] = 1.0;
            let back = if back_edges { s.saturating_sub(1) } else { s };
            t[(s * 3 + 2) * n + back] = 1.0;
        }
        let mut e = vec![0.0; n * n];
        for s in 0..n {
            e[s * n + s] = 1.0;
        }
        TabularBMDP::new(n, 3, n, t, e, vec![1.0, 0.0, 0.0], 0.9).unwrap()
    }

    #[test]
    fn diagonal_is_zero() {
        let m = compute_metric(&chain(false), 3);
        for s in 0..3 {
            assert_eq!(m.quasi(s, s), Some(0));
            assert_eq!(m.sym(s, s), Some(0));
        }
    }

    #[test]
    fn forward_chain_distances() {
        let m = compute_metric(&chain(false), 3);
        assert_eq!(m.quasi(0, 2), Some(2));
        assert_eq!(m.quasi(2, 0), None);
        assert_eq!(m.sym(0, 2), None);
    }

    #[test]
    fn symmetric_with_back_edges() {
        let m = compute_metric(&chain(true), 3);
        assert_eq!(m.sym(0, 2), Some(2));
        assert_eq!(m.sym(2, 0), Some(2));
    }

    #[test]
    fn truncation_at_max_k() {
        let m = compute_metric(&chain(true), 1);
        assert_eq!(m.quasi(0, 1), Some(1));
        assert_eq!(m.quasi(0, 2), None);
    }

    #[test]
    fn dark_rooms_retain_ties() {
        assert_eq!(dark_rooms(&chain(true)), vec![0, 1, 2]);
        let tv = fixtures::noisy_tv_chain();
        assert_eq!(dark_rooms(&tv), vec![1, 2, 3]);
    }

    #[test]
    fn cover_assumption_examples() {
        let report = check_cover_assumption(&fixtures::noisy_tv_chain(), 1);
        assert!(report.holds, "{:?}", report.violations);

        let bad = fixtures::dark_room_far_counterexample();
        let report = check_cover_assumption(&bad, 1);
        assert!(!report.holds);
        assert!(report.violations.contains(&CoverViolation { state: 0, clause: ViolatedClause::Cover }));
    }

    #[test]
    fn point_mass_does_not_cover_long_chain() {
        let bmdp = chain(true);
        let m = compute_metric(&bmdp, 3);
        let check = t_cover_check(&OccupancyMeasure::point(3, 0), &m, 1);
        assert!(!check.covered);
        assert_eq!(check.uncovered_states, vec![2]);
        assert!(t_cover_check(&OccupancyMeasure::uniform(3), &m, 0).covered);
    }
}
