//! Per-episode observation density models.
//!
//! Both models factor over view cells. The categorical model keeps class
//! counts with additive smoothing; the Gaussian model keeps running moments
//! of the class index with a variance floor. Either way the fitted parameters
//! are the maximum-likelihood (or smoothed MAP) estimate from every
//! observation seen since the last reset, so no observation buffer is stored.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::GridObservation;

/// Default smoothing constant of the categorical model.
pub const DEFAULT_ALPHA: f64 = 1.0;
/// Variance floor of the Gaussian model, in class-index units.
pub const GAUSSIAN_VARIANCE_FLOOR: f64 = 1e-3;

/// When the model is re-initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    #[default]
    PerEpisode,
    /// Also reset at every Explore + Control round boundary.
    PerRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    #[default]
    Categorical,
    Gaussian,
}

/// Independent smoothed categorical distribution per view cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalGridModel {
    n_cells: usize,
    n_classes: usize,
    alpha: f64,
    counts: Vec<u32>,
    n_updates: u32,
}

impl CategoricalGridModel {
    pub fn new(n_cells: usize, n_classes: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
        }
        if n_cells == 0 || n_classes < 2 {
            return Err(Error::Config(format!("categorical model needs cells and >= 2 classes, got {n_cells}x{n_classes}")));
        }
        Ok(Self { n_cells, n_classes, alpha, counts: vec![0; n_cells * n_classes], n_updates: 0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_updates(&self) -> u32 {
        self.n_updates
    }

    pub fn count(&self, cell: usize, class: usize) -> u32 {
        self.counts[cell * self.n_classes + class]
    }

    fn denom(&self) -> f64 {
        self.n_updates as f64 + self.alpha * self.n_classes as f64
    }

    /// Smoothed probability of `class` at `cell`.
    pub fn prob(&self, cell: usize, class: usize) -> f64 {
        (self.count(cell, class) as f64 + self.alpha) / self.denom()
    }

    pub fn log_prob(&self, obs: &GridObservation) -> f64 {
        debug_assert_eq!(obs.cells().len(), self.n_cells);
        let sum: f64 = obs
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.counts[i * self.n_classes + c as usize] as f64 + self.alpha).ln())
            .sum();
        sum - self.n_cells as f64 * self.denom().ln()
    }

    pub fn update(&mut self, obs: &GridObservation) {
        for (i, &c) in obs.cells().iter().enumerate() {
            self.counts[i * self.n_classes + c as usize] += 1;
        }
        self.n_updates += 1;
    }

    pub fn reset(&mut self) {
        self.counts.fill(0);
        self.n_updates = 0;
    }

    pub fn stat_len(&self) -> usize {
        self.n_cells * self.n_classes
    }

    /// Writes all smoothed cell-class probabilities, cell-major.
    pub fn write_statistic(&self, out: &mut [f64]) {
        let inv = 1.0 / self.denom();
        for (dst, &c) in out.iter_mut().zip(&self.counts) {
            *dst = (c as f64 + self.alpha) * inv;
        }
    }
}

/// Independent Gaussian per view cell over the class index.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGridModel {
    n_classes: usize,
    mean: Vec<f64>,
    /// Sum of squared deviations (Welford).
    m2: Vec<f64>,
    n_updates: u32,
}

impl GaussianGridModel {
    pub fn new(n_cells: usize, n_classes: usize) -> Result<Self> {
        if n_cells == 0 || n_classes < 2 {
            return Err(Error::Config(format!("gaussian model needs cells and >= 2 classes, got {n_cells}x{n_classes}")));
        }
        Ok(Self { n_classes, mean: vec![0.0; n_cells], m2: vec![0.0; n_cells], n_updates: 0 })
    }

    pub fn n_updates(&self) -> u32 {
        self.n_updates
    }

    /// Mean and floored variance of `cell`. Before any update these are the
    /// moments of a uniform distribution over the classes.
    pub fn moments(&self, cell: usize) -> (f64, f64) {
        if self.n_updates == 0 {
            let k = self.n_classes as f64;
            return ((k - 1.0) / 2.0, (k * k - 1.0) / 12.0);
        }
        (self.mean[cell], (self.m2[cell] / self.n_updates as f64).max(GAUSSIAN_VARIANCE_FLOOR))
    }

    pub fn log_prob(&self, obs: &GridObservation) -> f64 {
        obs.cells()
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (mu, var) = self.moments(i);
                let d = c as f64 - mu;
                -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
            })
            .sum()
    }

    pub fn update(&mut self, obs: &GridObservation) {
        self.n_updates += 1;
        let n = self.n_updates as f64;
        for (i, &c) in obs.cells().iter().enumerate() {
            let x = c as f64;
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    pub fn reset(&mut self) {
        self.mean.fill(0.0);
        self.m2.fill(0.0);
        self.n_updates = 0;
    }

    pub fn stat_len(&self) -> usize {
        2 * self.mean.len()
    }

    /// Writes all means followed by all standard deviations.
    pub fn write_statistic(&self, out: &mut [f64]) {
        let n = self.mean.len();
        for i in 0..n {
            let (mu, var) = self.moments(i);
            out[i] = mu;
            out[n + i] = var.sqrt();
        }
    }
}

/// A density model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    Categorical(CategoricalGridModel),
    Gaussian(GaussianGridModel),
}

impl DensityModel {
    pub fn new(kind: DensityKind, n_cells: usize, n_classes: usize, alpha: f64) -> Result<Self> {
        Ok(match kind {
            DensityKind::Categorical => Self::Categorical(CategoricalGridModel::new(n_cells, n_classes, alpha)?),
            DensityKind::Gaussian => Self::Gaussian(GaussianGridModel::new(n_cells, n_classes)?),
        })
    }

    /// Sum over cells of the log-likelihood of `obs`; always finite.
    pub fn log_prob(&self, obs: &GridObservation) -> f64 {
        match self {
            Self::Categorical(m) => m.log_prob(obs),
            Self::Gaussian(m) => m.log_prob(obs),
        }
    }

    pub fn update(&mut self, obs: &GridObservation) {
        match self {
            Self::Categorical(m) => m.update(obs),
            Self::Gaussian(m) => m.update(obs),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Self::Categorical(m) => m.reset(),
            Self::Gaussian(m) => m.reset(),
        }
    }

    pub fn n_updates(&self) -> u32 {
        match self {
            Self::Categorical(m) => m.n_updates(),
            Self::Gaussian(m) => m.n_updates(),
        }
    }

    pub fn stat_len(&self) -> usize {
        match self {
            Self::Categorical(m) => m.stat_len(),
            Self::Gaussian(m) => m.stat_len(),
        }
    }

    /// Writes the sufficient statistic into `out` (length [`Self::stat_len`]).
    pub fn write_statistic(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.stat_len());
        match self {
            Self::Categorical(m) => m.write_statistic(out),
            Self::Gaussian(m) => m.write_statistic(out),
        }
    }

    pub fn sufficient_statistic(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.stat_len()];
        self.write_statistic(&mut out);
        out
    }
}
