use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;
use crate::game::PolicyInput;

/// Layer sizes of an [`ActorCritic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    /// Number of distinct one-hot input indices.
    pub onehot_dim: usize,
    pub dense_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    emb: usize,
    w_in: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w_pi: usize,
    b_pi: usize,
    w_v: usize,
    b_v: usize,
    end: usize,
}

impl NetShape {
    fn layout(&self) -> Layout {
        let h = self.hidden;
        let emb = 0;
        let w_in = emb + self.onehot_dim * h;
        let b1 = w_in + self.dense_dim * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w_pi = b2 + h;
        let b_pi = w_pi + h * self.n_actions;
        let w_v = b_pi + self.n_actions;
        let b_v = w_v + h;
        Layout { emb, w_in, b1, w2, b2, w_pi, b_pi, w_v, b_v, end: b_v + 1 }
    }

    pub fn n_params(&self) -> usize {
        self.layout().end
    }
}

/// Two tanh layers shared by a softmax policy head and a scalar value head.
/// One-hot inputs enter through an embedding table (a sum of rows), dense
/// inputs through a weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<F> {
    shape: NetShape,
    params: Vec<F>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub batch: usize,
    pub dense: Vec<F>,
    pub h1: Vec<F>,
    pub h2: Vec<F>,
    pub logits: Vec<F>,
    pub values: Vec<F>,
}

impl<F: Scalar> ActorCritic<F> {
    /// Gaussian initialization scaled by fan-in; the policy head starts
    /// 100 times smaller so that initial action distributions are near uniform.
    pub fn new<R: Rng + ?Sized>(shape: NetShape, n_active_onehot: usize, rng: &mut R) -> Self {
        let l = shape.layout();
        let mut params = vec![F::zero(); l.end];
        let mut fill = |range: std::ops::Range<usize>, std: f64| {
            for p in &mut params[range] {
                let z: f64 = StandardNormal.sample(rng);
                *p = F::from_f64_lossy(z * std);
            }
        };
        let h = shape.hidden;
        let n_in = (n_active_onehot + shape.dense_dim).max(1) as f64;
        fill(l.emb..l.w_in, 1.0 / n_in.sqrt());
        fill(l.w_in..l.b1, 1.0 / n_in.sqrt());
        fill(l.w2..l.b2, 1.0 / (h as f64).sqrt());
        fill(l.w_pi..l.b_pi, 0.01 / (h as f64).sqrt());
        fill(l.w_v..l.b_v, 1.0 / (h as f64).sqrt());
        Self { shape, params }
    }

    pub fn from_params(shape: NetShape, params: Vec<F>) -> Self {
        assert_eq!(params.len(), shape.n_params(), "parameter count does not match shape");
        Self { shape, params }
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Sets the policy head to zero, making every action equally likely.
    pub fn zero_policy_head(&mut self) {
        let l = self.shape.layout();
        self.params[l.w_pi..l.w_v].fill(F::zero());
    }

    /// Converts to another precision.
    pub fn cast<G: Scalar>(&self) -> ActorCritic<G> {
        ActorCritic {
            shape: self.shape,
            params: self.params.iter().map(|p| G::from_f64_lossy(p.to_f64().expect("finite"))).collect(),
        }
    }

    pub fn forward(&self, inputs: &[&PolicyInput]) -> Forward<F> {
        let s = self.shape;
        let l = s.layout();
        let (b, h, d, a) = (inputs.len(), s.hidden, s.dense_dim, s.n_actions);
        let p = &self.params;

        let mut dense = Vec::with_capacity(b * d);
        for inp in inputs {
            assert_eq!(inp.dense.len(), d, "dense input width");
            dense.extend(inp.dense.iter().map(|&x| F::from_f32(x).expect("finite input")));
        }
        let mut h1 = vec![F::zero(); b * h];
        F::matmul(b, d, h, &dense, false, &p[l.w_in..l.b1], false, F::zero(), &mut h1);
        let b1 = &p[l.b1..l.w2];
        for (row, inp) in h1.chunks_mut(h).zip(inputs) {
            for (x, &bias) in row.iter_mut().zip(b1) {
                *x += bias;
            }
            for &idx in &inp.onehot {
                let off = l.emb + idx as usize * h;
                for (x, &w) in row.iter_mut().zip(&p[off..off + h]) {
                    *x += w;
                }
            }
            row.iter_mut().for_each(|x| *x = x.tanh());
        }

        let mut h2 = vec![F::zero(); b * h];
        F::matmul(b, h, h, &h1, false, &p[l.w2..l.b2], false, F::zero(), &mut h2);
        let b2 = &p[l.b2..l.w_pi];
        for row in h2.chunks_mut(h) {
            for (x, &bias) in row.iter_mut().zip(b2) {
                *x = (*x + bias).tanh();
            }
        }

        let mut logits = vec![F::zero(); b * a];
        F::matmul(b, h, a, &h2, false, &p[l.w_pi..l.b_pi], false, F::zero(), &mut logits);
        let b_pi = &p[l.b_pi..l.w_v];
        for row in logits.chunks_mut(a) {
            for (x, &bias) in row.iter_mut().zip(b_pi) {
                *x += bias;
            }
        }
        let mut values = vec![F::zero(); b];
        F::matmul(b, h, 1, &h2, false, &p[l.w_v..l.b_v], false, F::zero(), &mut values);
        let b_v = p[l.b_v];
        values.iter_mut().for_each(|v| *v += b_v);

        Forward { batch: b, dense, h1, h2, logits, values }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivatives with respect to the logits and values are given.
    pub fn backward(&self, inputs: &[&PolicyInput], fwd: &Forward<F>, dlogits: &[F], dvalues: &[F], grad: &mut [F]) {
        let s = self.shape;
        let l = s.layout();
        let (b, h, d, a) = (fwd.batch, s.hidden, s.dense_dim, s.n_actions);
        let p = &self.params;
        assert_eq!(grad.len(), l.end);

        // Heads.
        F::matmul(h, b, a, &fwd.h2, true, dlogits, false, F::one(), &mut grad[l.w_pi..l.b_pi]);
        for row in dlogits.chunks(a) {
            for (g, &x) in grad[l.b_pi..l.w_v].iter_mut().zip(row) {
                *g += x;
            }
        }
        F::matmul(h, b, 1, &fwd.h2, true, dvalues, false, F::one(), &mut grad[l.w_v..l.b_v]);
        grad[l.b_v] += dvalues.iter().copied().sum();

        // Second layer.
        let mut dz2 = vec![F::zero(); b * h];
        F::matmul(b, a, h, dlogits, false, &p[l.w_pi..l.b_pi], true, F::zero(), &mut dz2);
        let w_v = &p[l.w_v..l.b_v];
        for ((row, h2row), &dv) in dz2.chunks_mut(h).zip(fwd.h2.chunks(h)).zip(dvalues) {
            for ((x, &y), &w) in row.iter_mut().zip(h2row).zip(w_v) {
                *x = (*x + dv * w) * (F::one() - y * y);
            }
        }
        F::matmul(h, b, h, &fwd.h1, true, &dz2, false, F::one(), &mut grad[l.w2..l.b2]);
        for row in dz2.chunks(h) {
            for (g, &x) in grad[l.b2..l.w_pi].iter_mut().zip(row) {
                *g += x;
            }
        }

        // First layer.
        let mut dz1 = vec![F::zero(); b * h];
        F::matmul(b, h, h, &dz2, false, &p[l.w2..l.b2], true, F::zero(), &mut dz1);
        for (row, h1row) in dz1.chunks_mut(h).zip(fwd.h1.chunks(h)) {
            for (x, &y) in row.iter_mut().zip(h1row) {
                *x *= F::one() - y * y;
            }
        }
        F::matmul(d, b, h, &fwd.dense, true, &dz1, false, F::one(), &mut grad[l.w_in..l.b1]);
        for (row, inp) in dz1.chunks(h).zip(inputs) {
            for (g, &x) in grad[l.b1..l.w2].iter_mut().zip(row) {
                *g += x;
            }
            for &idx in &inp.onehot {
                let off = l.emb + idx as usize * h;
                for (g, &x) in grad[off..off + h].iter_mut().zip(row) {
                    *g += x;
                }
            }
        }
    }
}

/// Numerically stable log-softmax of one row, in f64.
pub fn log_softmax<F: Scalar>(logits: &[F]) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}
