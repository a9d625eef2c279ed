use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ppo::{Adam, RunningStat};
use crate::gridworld::GridObservation;

pub const RND_OUTPUT_DIM: usize = 64;

/// Random network distillation: a frozen random embedding `tanh(W x + b)`
/// of the one-hot observation and a trained predictor of the same form. The
/// novelty reward is the squared prediction error over a running standard
/// deviation of past errors.
#[derive(Debug, Clone)]
pub struct RndState {
    n_classes: usize,
    in_dim: usize,
    out_dim: usize,
    target: Vec<f32>,
    predictor: Vec<f32>,
    adam: Adam<f32>,
    stat: RunningStat,
}

impl RndState {
    pub fn new<R: Rng + ?Sized>(n_cells: usize, n_classes: usize, out_dim: usize, lr: f64, rng: &mut R) -> Self {
        let in_dim = n_cells * n_classes;
        let n = (in_dim + 1) * out_dim;
        let std = 1.0 / (n_cells as f64).sqrt();
        let draw = |rng: &mut R| -> Vec<f32> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    (z * std) as f32
                })
                .collect()
        };
        let target = draw(rng);
        let predictor = draw(rng);
        Self { n_classes, in_dim, out_dim, target, predictor, adam: Adam::new(n, lr), stat: RunningStat::default() }
    }

    pub fn target_params(&self) -> &[f32] {
        &self.target
    }

    /// Makes the predictor an exact copy of the target.
    pub fn clone_target_into_predictor(&mut self) {
        self.predictor.clone_from(&self.target);
    }

    fn embed(&self, w: &[f32], obs: &GridObservation) -> Vec<f32> {
        let bias = self.in_dim * self.out_dim;
        let mut z = w[bias..bias + self.out_dim].to_vec();
        for (cell, &c) in obs.cells().iter().enumerate() {
            let off = (cell * self.n_classes + c as usize) * self.out_dim;
            for (x, &wi) in z.iter_mut().zip(&w[off..off + self.out_dim]) {
                *x += wi;
            }
        }
        z.iter_mut().for_each(|x| *x = x.tanh());
        z
    }

    /// Squared prediction error for `obs`.
    pub fn raw_error(&self, obs: &GridObservation) -> f64 {
        let t = self.embed(&self.target, obs);
        let p = self.embed(&self.predictor, obs);
        t.iter().zip(&p).map(|(a, b)| ((a - b) as f64).powi(2)).sum()
    }

    /// Normalized novelty reward; the normalizer is left unchanged.
    pub fn rnd_reward(&self, obs: &GridObservation) -> f64 {
        let sd = self.stat.std();
        let e = self.raw_error(obs);
        if sd > 1e-8 {
            e / sd
        } else {
            e
        }
    }

    /// Feeds raw errors into the running normalizer.
    pub fn observe_errors(&mut self, errors: &[f64]) {
        errors.iter().for_each(|&e| self.stat.push(e));
    }

    /// One Adam step on the mean squared prediction error over `batch`.
    /// Returns the loss before the step.
    pub fn train(&mut self, batch: &[&GridObservation]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut grad = vec![0.0f32; self.predictor.len()];
        let bias = self.in_dim * self.out_dim;
        let inv = 1.0 / batch.len() as f32;
        let mut loss = 0.0;
        for obs in batch {
            let t = self.embed(&self.target, obs);
            let p = self.embed(&self.predictor, obs);
            let dz: Vec<f32> = t
                .iter()
                .zip(&p)
                .map(|(a, b)| {
                    loss += ((b - a) as f64).powi(2) * inv as f64;
                    2.0 * (b - a) * (1.0 - b * b) * inv
                })
                .collect();
            for (g, d) in grad[bias..].iter_mut().zip(&dz) {
                *g += d;
            }
            for (cell, &c) in obs.cells().iter().enumerate() {
                let off = (cell * self.n_classes + c as usize) * self.out_dim;
                for (g, d) in grad[off..off + self.out_dim].iter_mut().zip(&dz) {
                    *g += d;
                }
            }
        }
        self.adam.step(&mut self.predictor, &grad);
        loss
    }
}
