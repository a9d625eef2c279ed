use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{emission_entropy_vector, observation_marginal, OccupancyMeasure, TabularBMDP};
use crate::error::{Error, Result};

/// Largest admissible gap in the observation-entropy decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-9;

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// `½ Σ |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Both sides of `H(d(o)) = E_{d(s)} H(O|s) + H(d(s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Evaluates the observation-entropy decomposition for `occ`.
///
/// The left side is the entropy of the emitted observation marginal, the right
/// side the expected emission entropy plus the state entropy. Disjoint supports
/// make them equal; a gap of `1e-9` or more is reported as an error.
pub fn check_entropy_decomposition(bmdp: &TabularBMDP, occ: &OccupancyMeasure) -> Result<DecompositionCheck> {
    let lhs = entropy(&observation_marginal(bmdp, occ));
    let h = emission_entropy_vector(bmdp);
    let expected: f64 = occ.weights().iter().zip(&h).map(|(w, h)| w * h).sum();
    let rhs = expected + entropy(occ.weights());
    let gap = (lhs - rhs).abs();
    if gap >= DECOMPOSITION_TOL {
        return Err(Error::DecompositionViolation { gap });
    }
    Ok(DecompositionCheck { lhs, rhs, gap })
}

/// Cross-entropy of a model against the observation marginal, and its slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurpriseBound {
    pub cross_entropy: f64,
    pub obs_entropy: f64,
    pub kl: f64,
}

/// Expected surprise `-Σ d(o) ln q(o)` under `model_dist` versus `H(d(o))`.
pub fn check_surprise_bound(
    bmdp: &TabularBMDP,
    occ: &OccupancyMeasure,
    model_dist: &[f64],
) -> Result<SurpriseBound> {
    if model_dist.len() != bmdp.n_obs() {
        return Err(Error::Config(format!(
            "model distribution has {} entries, expected {}",
            model_dist.len(),
            bmdp.n_obs()
        )));
    }
    let sum: f64 = model_dist.iter().sum();
    if model_dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDistribution { what: "model_dist".into(), detail: format!("sum {sum}") });
    }
    let marginal = observation_marginal(bmdp, occ);
    let mut cross_entropy = 0.0;
    for (o, (&d, &q)) in marginal.iter().zip(model_dist).enumerate() {
        if d > 0.0 {
            if q <= 0.0 {
                return Err(Error::InfiniteSurprise { obs: o, mass: d });
            }
            cross_entropy -= d * q.ln();
        }
    }
    let obs_entropy = entropy(&marginal);
    Ok(SurpriseBound { cross_entropy, obs_entropy, kl: cross_entropy - obs_entropy })
}

/// Stationary state distribution of an observation-entropy maximizer:
/// the softmax of the emission-entropy vector.
pub fn rnd_stationary(h: &[f64]) -> OccupancyMeasure {
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = h.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    OccupancyMeasure::new(w).expect("softmax of finite entries is a distribution")
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexSolverOptions {
    /// Initial step of each backtracking search.
    pub step: f64,
    /// Number of starting points (the first is the barycenter).
    pub restarts: usize,
    /// Stop once the gradient-mapping update at `step` is shorter than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SimplexSolverOptions {
    fn default() -> Self {
        Self { step: 0.1, restarts: 10, tol: 1e-8, max_iter: 200_000, seed: 0 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maximizes a concave function over the probability simplex by projected
/// gradient ascent with backtracking and random restarts.
///
/// Returns the best point found and its objective value.
pub fn maximize_concave_on_simplex<F, G>(n: usize, f: F, grad: G, opts: &SimplexSolverOptions) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(n > 0, "simplex dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unit_gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut best: Option<(Vec<f64>, f64)> = None;

    for restart in 0..opts.restarts.max(1) {
        let mut x = if restart == 0 {
            vec![1.0 / n as f64; n]
        } else {
            let g: Vec<f64> = (0..n).map(|_| unit_gamma.sample(&mut rng)).collect();
            let z: f64 = g.iter().sum();
            g.into_iter().map(|v| v / z).collect()
        };
        let mut fx = f(&x);
        for _ in 0..opts.max_iter {
            let g = grad(&x);
            let mut eta = opts.step;
            let mut first = true;
            let mut accepted = None;
            while eta > 1e-20 {
                let cand = project_to_simplex(&x.iter().zip(&g).map(|(a, b)| a + eta * b).collect::<Vec<_>>());
                let diff: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dn = norm(&diff);
                if first && dn < opts.tol {
                    break;
                }
                first = false;
                let fc = f(&cand);
                let lin: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
                if fc >= fx + lin - dn * dn / (2.0 * eta) {
                    accepted = Some((cand, fc));
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    x = cand;
                    fx = fc;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|(_, bv)| fx > *bv) {
            best = Some((x, fx));
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        // Oracle: direct summation.
        let direct = -(0.7f64 * 0.7f64.ln() + 3.0 * 0.1 * 0.1f64.ln());
        assert!((entropy(&[0.7, 0.1, 0.1, 0.1]) - direct).abs() < 1e-15);
        assert!((direct - 0.940447).abs() < 1e-6);
    }

    #[test]
    fn softmax_closed_form() {
        assert_eq!(rnd_stationary(&[0.0, 0.0]).weights(), &[0.5, 0.5]);
        let w = rnd_stationary(&[1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((w.weights()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w.weights()[0] - 0.731059).abs() < 1e-6);
        assert!((w.weights()[1] - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn projection_is_idempotent_on_simplex() {
        let p = vec![0.2, 0.3, 0.5];
        let q = project_to_simplex(&p);
        assert!(total_variation(&p, &q) < 1e-15);
        let q = project_to_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(q, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_maximizer_recovers_uniform_for_pure_entropy() {
        let (x, v) = maximize_concave_on_simplex(
            5,
            entropy,
            |x| x.iter().map(|&p| -(p.max(1e-300).ln() + 1.0)).collect(),
            &SimplexSolverOptions::default(),
        );
        assert!((v - 5f64.ln()).abs() < 1e-12);
        assert!(x.iter().all(|&p| (p - 0.2).abs() < 1e-8));
    }
}
