use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::net::{log_softmax, ActorCritic, NetShape};
use super::{PPOConfig, Scalar};
use crate::error::{Error, Result};
use crate::game::{Decision, Policy, PolicyInput};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<F>,
    pub v: Vec<F>,
    pub t: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-5, m: vec![F::zero(); n], v: vec![F::zero(); n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [F], grad: &[F]) {
        self.t += 1;
        let b1 = F::from_f64_lossy(self.beta1);
        let b2 = F::from_f64_lossy(self.beta2);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = F::from_f64_lossy(self.lr * c2.sqrt() / c1);
        let eps = F::from_f64_lossy(self.eps * c2.sqrt());
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    pub(crate) m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn var(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.var().sqrt()
    }
}

/// Generalized advantage estimates and value targets for one trajectory that
/// ends at its last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Per-sample quantities of the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    pub surrogate: f64,
    pub entropy: f64,
    pub log_prob: f64,
    pub clipped: bool,
}

/// Value and logit gradient of `-surrogate - entropy_coef * entropy` for one
/// sample, where the surrogate is `min(r A, clip(r, 1-eps, 1+eps) A)` and
/// `r = pi(a) / pi_old(a)`.
pub fn logit_grad(
    logits: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    clip_epsilon: f64,
    entropy_coef: f64,
) -> (SampleTerms, Vec<f64>) {
    let lp = log_softmax(logits);
    let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
    let ratio = (lp[action] - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
    let active = unclipped <= clipped;
    let entropy: f64 = -probs.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
    // d(-surrogate)/d(log pi(a)) when the unclipped branch is active.
    let g = if active { -advantage * ratio } else { 0.0 };
    let grad = probs
        .iter()
        .zip(&lp)
        .enumerate()
        .map(|(j, (&p, &l))| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            g * (onehot - p) + entropy_coef * p * (l + entropy)
        })
        .collect();
    (SampleTerms { surrogate: unclipped.min(clipped), entropy, log_prob: lp[action], clipped: !active }, grad)
}

/// One training sample of the clipped-surrogate update.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample<'a> {
    pub input: &'a PolicyInput,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Batch-mean loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// `policy + value_coef * value - entropy_coef * entropy`.
    pub total: f64,
    /// Negated mean clipped surrogate.
    pub policy: f64,
    /// Half the mean squared value error.
    pub value: f64,
    pub entropy: f64,
    /// Mean of `old log pi - new log pi`.
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Loss and its parameter gradient on a batch.
pub fn ppo_loss_and_grad<F: Scalar>(
    net: &ActorCritic<F>,
    samples: &[PpoSample<'_>],
    clip_epsilon: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> (LossParts, Vec<F>) {
    let b = samples.len();
    let a = net.shape().n_actions;
    let inputs: Vec<&PolicyInput> = samples.iter().map(|s| s.input).collect();
    let fwd = net.forward(&inputs);
    let inv = 1.0 / b as f64;
    let mut dlogits = vec![F::zero(); b * a];
    let mut dvalues = vec![F::zero(); b];
    let mut parts = LossParts::default();
    for (i, s) in samples.iter().enumerate() {
        let row: Vec<f64> = fwd.logits[i * a..(i + 1) * a].iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
        let (terms, g) = logit_grad(&row, s.action, s.old_log_prob, s.advantage, clip_epsilon, entropy_coef);
        for (dst, gj) in dlogits[i * a..(i + 1) * a].iter_mut().zip(g) {
            *dst = F::from_f64_lossy(gj * inv);
        }
        let v = fwd.values[i].to_f64().unwrap_or(f64::NAN);
        let err = v - s.ret;
        dvalues[i] = F::from_f64_lossy(value_coef * err * inv);
        parts.policy -= terms.surrogate * inv;
        parts.value += 0.5 * err * err * inv;
        parts.entropy += terms.entropy * inv;
        parts.kl += (s.old_log_prob - terms.log_prob) * inv;
        parts.clip_fraction += if terms.clipped { inv } else { 0.0 };
    }
    parts.total = parts.policy + value_coef * parts.value - entropy_coef * parts.entropy;
    let mut grad = vec![F::zero(); net.params().len()];
    net.backward(&inputs, &fwd, &dlogits, &dvalues, &mut grad);
    (parts, grad)
}

/// Loss only.
pub fn ppo_loss<F: Scalar>(
    net: &ActorCritic<F>,
    samples: &[PpoSample<'_>],
    clip_epsilon: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> LossParts {
    ppo_loss_and_grad(net, samples, clip_epsilon, value_coef, entropy_coef).0
}

/// One policy's experience in one episode, in time order.
#[derive(Debug, Clone, Default)]
pub struct Trajectory<'a> {
    pub inputs: Vec<&'a PolicyInput>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl<'a> Trajectory<'a> {
    pub fn push(&mut self, input: &'a PolicyInput, d: &Decision, reward: f64) {
        self.inputs.push(input);
        self.actions.push(d.action);
        self.log_probs.push(d.log_prob);
        self.values.push(d.value);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Averages over all minibatch steps of an update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl_estimate: f64,
    pub clip_fraction: f64,
    pub n_samples: usize,
}

/// An actor-critic with its optimizer and reward normalizer.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub net: ActorCritic<f32>,
    pub adam: Adam<f32>,
    pub cfg: PPOConfig,
    pub return_stat: RunningStat,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(shape: NetShape, n_active_onehot: usize, cfg: PPOConfig, rng: &mut R) -> Self {
        let net = ActorCritic::new(shape, n_active_onehot, rng);
        let adam = Adam::new(shape.n_params(), cfg.learning_rate);
        Self { net, adam, cfg, return_stat: RunningStat::default() }
    }

    /// Samples actions for a batch of inputs.
    pub fn act_batch(&self, inputs: &[&PolicyInput], rng: &mut ChaCha8Rng) -> Result<Vec<Decision>> {
        let fwd = self.net.forward(inputs);
        let a = self.net.shape().n_actions;
        let mut out = Vec::with_capacity(inputs.len());
        for i in 0..inputs.len() {
            let lp = log_softmax(&fwd.logits[i * a..(i + 1) * a]);
            if lp.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite action logits {:?}", &fwd.logits[i * a..(i + 1) * a])));
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut action = a - 1;
            for (j, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    action = j;
                    break;
                }
            }
            out.push(Decision { action, log_prob: lp[action], value: fwd.values[i] as f64 });
        }
        Ok(out)
    }

    /// Clipped-surrogate update on a batch of trajectories.
    pub fn update(&mut self, trajectories: &[Trajectory<'_>], rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let cfg = self.cfg.clone();
        let scale = if cfg.normalize_rewards {
            for tr in trajectories {
                let mut acc = 0.0;
                for r in tr.rewards.iter().rev() {
                    acc = r + cfg.gamma * acc;
                    self.return_stat.push(acc);
                }
            }
            let sd = self.return_stat.std();
            if sd > 1e-8 {
                1.0 / sd
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut samples = Vec::new();
        for tr in trajectories.iter().filter(|t| !t.is_empty()) {
            let rewards: Vec<f64> = tr.rewards.iter().map(|r| r * scale).collect();
            let (adv, ret) = gae(&rewards, &tr.values, cfg.gamma, cfg.gae_lambda);
            for i in 0..tr.len() {
                samples.push(PpoSample {
                    input: tr.inputs[i],
                    action: tr.actions[i],
                    old_log_prob: tr.log_probs[i],
                    advantage: adv[i],
                    ret: ret[i],
                });
            }
        }
        if samples.is_empty() {
            return Ok(UpdateStats::default());
        }
        normalize_advantages(&mut samples)?;

        let mut stats = UpdateStats { n_samples: samples.len(), ..UpdateStats::default() };
        let mut n_steps = 0usize;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut batch = Vec::with_capacity(cfg.minibatch_size);
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| samples[i]));
                let (parts, mut grad) =
                    ppo_loss_and_grad(&self.net, &batch, cfg.clip_epsilon, cfg.value_coef, cfg.entropy_coef);
                if !parts.total.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss {parts:?}")));
                }
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
                self.adam.step(self.net.params_mut(), &grad);
                stats.policy_loss += parts.policy;
                stats.value_loss += parts.value;
                stats.entropy += parts.entropy;
                stats.kl_estimate += parts.kl;
                stats.clip_fraction += parts.clip_fraction;
                n_steps += 1;
            }
        }
        let k = n_steps as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.kl_estimate /= k;
        stats.clip_fraction /= k;
        Ok(stats)
    }
}

impl Policy for PpoAgent {
    fn n_actions(&self) -> usize {
        self.net.shape().n_actions
    }

    fn act(&mut self, inputs: &[PolicyInput], rng: &mut ChaCha8Rng) -> Result<Vec<Decision>> {
        let refs: Vec<&PolicyInput> = inputs.iter().collect();
        self.act_batch(&refs, rng)
    }
}

/// Rescales advantages to zero mean and unit variance.
fn normalize_advantages(samples: &mut [PpoSample<'_>]) -> Result<()> {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    if !mean.is_finite() || !var.is_finite() {
        let dump: Vec<f64> = samples.iter().take(16).map(|s| s.advantage).collect();
        return Err(Error::Numeric(format!("non-finite advantages, first values {dump:?}")));
    }
    let sd = var.sqrt() + 1e-8;
    for s in samples {
        s.advantage = (s.advantage - mean) / sd;
    }
    Ok(())
}

fn clip_grad_norm<F: Scalar>(grad: &mut [F], max_norm: f64) {
    let norm = grad.iter().map(|g| g.to_f64().unwrap_or(f64::NAN).powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = F::from_f64_lossy(max_norm / norm);
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gae_with_unit_lambda_is_monte_carlo() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.2, 0.1];
        let (adv, ret) = gae(&r, &v, 0.9, 1.0);
        let mc = crate::game::returns_to_go(&r, 0.9);
        for i in 0..3 {
            assert!((ret[i] - mc[i]).abs() < 1e-12);
            assert!((adv[i] - (mc[i] - v[i])).abs() < 1e-12);
        }
        let (adv0, _) = gae(&r, &v, 0.9, 0.0);
        assert!((adv0[0] - (1.0 + 0.9 * 0.2 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn two_logit_gradient_matches_closed_form() {
        // pi(0) = sigmoid(t0 - t1); in the unclipped branch the gradient of
        // -A pi(0) / pi_old(0) is -A / pi_old * pi(0)(1 - pi(0)) * (1, -1).
        let theta = [0.3f64, -0.2];
        let old = 0.5f64.ln();
        let adv = -1.5;
        let p0 = 1.0 / (1.0 + (-(theta[0] - theta[1])).exp());
        let (terms, g) = logit_grad(&theta, 0, old, adv, 0.2, 0.0);
        assert!(!terms.clipped);
        let expect = -adv / 0.5 * p0 * (1.0 - p0);
        assert!((g[0] - expect).abs() < 1e-6);
        assert!((g[1] + expect).abs() < 1e-6);
        // Positive advantage with ratio above 1 + eps: clipped, zero gradient.
        let (terms, g) = logit_grad(&theta, 0, old, 1.5, 0.2, 0.0);
        assert!(terms.clipped);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let theta = [0.4, -1.0, 0.25];
        let ent = |t: &[f64]| logit_grad(t, 0, 0.0, 0.0, 0.2, 0.0).0.entropy;
        let (_, g) = logit_grad(&theta, 0, 0.0, 0.0, 0.2, 1.0);
        for j in 0..3 {
            let mut up = theta;
            up[j] += 1e-6;
            let mut dn = theta;
            dn[j] -= 1e-6;
            let fd = -(ent(&up) - ent(&dn)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0f64, -1.0];
        let mut adam = Adam::new(2, 0.1);
        adam.step(&mut p, &[2.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-4 && (p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn running_stat_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let mut s = RunningStat::default();
        xs.iter().for_each(|&x| s.push(x));
        let m = 3.75;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((s.mean - m).abs() < 1e-12 && (s.var() - v).abs() < 1e-12);
    }

    #[test]
    fn act_is_deterministic_given_seed() {
        let shape = NetShape { onehot_dim: 4, dense_dim: 1, hidden: 8, n_actions: 3 };
        let agent = PpoAgent::new(shape, 1, PPOConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let inp = PolicyInput { onehot: vec![2], dense: vec![0.5] };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| agent.act_batch(&[&inp], &mut rng).unwrap()[0].action).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }
}
