//! Hand-built and randomly generated Block MDPs used by the theory checks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{check_cover_assumption, OccupancyMeasure, TabularBMDP};
use crate::error::{Error, Result};

/// Attempts allowed when rejection-sampling a fixture.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// Actions of the chain fixtures.
pub const STAY: usize = 0;
pub const RIGHT: usize = 1;
pub const LEFT: usize = 2;

/// A line of states with stay/right/left actions; `emit[s]` lists the
/// observation probabilities of state `s` over its own block of observations.
fn line(emit: &[Vec<f64>], discount: f64) -> TabularBMDP {
    let n = emit.len();
    let n_obs: usize = emit.iter().map(Vec::len).sum();
    let mut t = vec![0.0; n * 3 * n];
    for s in 0..n {
        t[(s * 3 + STAY) * n + s] = 1.0;
        t[(s * 3 + RIGHT) * n + (s + 1).min(n - 1)] = 1.0;
        t[(s * 3 + LEFT) * n + s.saturating_sub(1)] = 1.0;
    }
    let mut e = vec![0.0; n * n_obs];
    let mut off = 0;
    for (s, probs) in emit.iter().enumerate() {
        e[s * n_obs + off..s * n_obs + off + probs.len()].copy_from_slice(probs);
        off += probs.len();
    }
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    TabularBMDP::new(n, 3, n_obs, t, e, init, discount).expect("line fixture is valid")
}

/// State 0 is a noisy TV (uniform over 12 observations); states 1..=3 are
/// dark rooms with one observation each. Satisfies the cover assumption at `T = 1`.
pub fn noisy_tv_chain() -> TabularBMDP {
    let mut emit = vec![vec![1.0 / 12.0; 12]];
    emit.extend((0..3).map(|_| vec![1.0]));
    line(&emit, 0.9)
}

/// Four rooms in a line, each a noisy state (uniform over 4 observations)
/// followed by a dark state. Satisfies the cover assumption at `T = 2`.
pub fn four_dark_room_chain() -> TabularBMDP {
    let emit: Vec<Vec<f64>> = (0..8).map(|s| if s % 2 == 0 { vec![0.25; 4] } else { vec![1.0] }).collect();
    line(&emit, 0.9)
}

/// Three noisy states followed by a single dark room: state 0 is three steps
/// from it, so the cover assumption fails for `T < 3`.
pub fn dark_room_far_counterexample() -> TabularBMDP {
    let emit = vec![vec![0.5; 2], vec![0.5; 2], vec![0.5; 2], vec![1.0]];
    line(&emit, 0.9)
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).expect("valid gamma");
    loop {
        let v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
        let z: f64 = v.iter().sum();
        if z > 0.0 {
            return v.into_iter().map(|x| x / z).collect();
        }
    }
}

/// Dirichlet draw with each coordinate zeroed with probability `p_zero`
/// (at least one coordinate survives).
fn sparse_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize, p_zero: f64) -> Vec<f64> {
    let keep: Vec<bool> = loop {
        let k: Vec<bool> = (0..n).map(|_| !rng.random_bool(p_zero)).collect();
        if k.iter().any(|&b| b) {
            break k;
        }
    };
    let d = dirichlet(rng, n);
    let mut v: Vec<f64> = d.iter().zip(&keep).map(|(&x, &k)| if k { x } else { 0.0 }).collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    // Absorb rounding so the row sums to one within 1e-12.
    let fix = 1.0 - v.iter().sum::<f64>();
    if let Some(i) = v.iter().position(|&x| x > 0.5) {
        v[i] += fix;
    }
    v
}

/// A random disjoint BMDP with at most `max_states` states, `max_actions`
/// actions and `max_obs` observations (`max_obs >= max_states`).
pub fn random_bmdp<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_actions: usize, max_obs: usize) -> TabularBMDP {
    let n_states = rng.random_range(1..=max_states);
    let n_actions = rng.random_range(1..=max_actions);
    let n_obs = rng.random_range(n_states..=max_obs.max(n_states));

    let mut owner: Vec<usize> = (0..n_states).collect();
    owner.extend((n_states..n_obs).map(|_| rng.random_range(0..n_states)));
    owner.shuffle(rng);

    let mut emission = vec![0.0; n_states * n_obs];
    for s in 0..n_states {
        let owned: Vec<usize> = (0..n_obs).filter(|&o| owner[o] == s).collect();
        let w = sparse_dirichlet(rng, owned.len(), 0.2);
        for (&o, &p) in owned.iter().zip(&w) {
            emission[s * n_obs + o] = p;
        }
    }
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(sparse_dirichlet(rng, n_states, 0.5));
    }
    let init = sparse_dirichlet(rng, n_states, 0.3);
    let discount = rng.random_range(0.0..0.99);
    TabularBMDP::new(n_states, n_actions, n_obs, transition, emission, init, discount)
        .expect("generator produces valid BMDPs")
}

/// A random occupancy measure on `n` states, sometimes with zero entries.
pub fn random_occupancy<R: Rng + ?Sized>(rng: &mut R, n: usize) -> OccupancyMeasure {
    OccupancyMeasure::new(sparse_dirichlet(rng, n, 0.25)).expect("normalized")
}

/// A random distribution over `n` outcomes with full support.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = dirichlet(rng, n);
    let fix = 1.0 - v.iter().sum::<f64>();
    let i = (0..n).max_by(|&a, &b| v[a].total_cmp(&v[b])).expect("nonempty");
    v[i] += fix;
    v
}

/// One candidate for [`random_cover_fixture`]: mostly deterministic dynamics,
/// dark rooms with a deterministic observation and a self-loop, noisy states
/// with two to four observations.
fn cover_candidate<R: Rng + ?Sized>(rng: &mut R) -> TabularBMDP {
    let n_states = rng.random_range(2..=8);
    let n_actions = rng.random_range(2..=3);
    let n_dark = rng.random_range(1..=n_states);
    let mut dark = vec![false; n_states];
    let mut order: Vec<usize> = (0..n_states).collect();
    order.shuffle(rng);
    for &s in &order[..n_dark] {
        dark[s] = true;
    }

    let mut transition = vec![0.0; n_states * n_actions * n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &mut transition[(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
            if a == 0 && dark[s] {
                row[s] = 1.0;
            } else if rng.random_bool(0.9) {
                row[rng.random_range(0..n_states)] = 1.0;
            } else {
                row.copy_from_slice(&random_distribution(rng, n_states));
            }
        }
    }

    let blocks: Vec<usize> = dark.iter().map(|&d| if d { 1 } else { rng.random_range(2..=4) }).collect();
    let n_obs: usize = blocks.iter().sum();
    let mut emission = vec![0.0; n_states * n_obs];
    let mut off = 0;
    for (s, &k) in blocks.iter().enumerate() {
        let probs = if k == 1 { vec![1.0] } else { random_distribution(rng, k) };
        emission[s * n_obs + off..s * n_obs + off + k].copy_from_slice(&probs);
        off += k;
    }
    let mut init = vec![0.0; n_states];
    init[rng.random_range(0..n_states)] = 1.0;
    TabularBMDP::new(n_states, n_actions, n_obs, transition, emission, init, 0.9).expect("valid candidate")
}

/// A random fixture inside the brute-force game envelope that satisfies the
/// cover assumption for `horizon`, found by rejection sampling.
pub fn random_cover_fixture<R: Rng + ?Sized>(rng: &mut R, horizon: usize) -> Result<TabularBMDP> {
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let candidate = cover_candidate(rng);
        if check_cover_assumption(&candidate, horizon).holds {
            return Ok(candidate);
        }
    }
    Err(Error::Generation(MAX_GENERATION_ATTEMPTS))
}
