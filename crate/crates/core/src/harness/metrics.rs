use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent vector signal `s_i(k) ∈ R^dim` sampled at common times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub n_agents: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    /// `values[(k * n_agents + i) * dim + c]`
    pub values: Vec<f64>,
}

impl SignalSeries {
    pub fn new(n_agents: usize, dim: usize) -> Self {
        Self {
            n_agents,
            dim,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(n_agents: usize, dim: usize, samples: usize) -> Self {
        Self {
            n_agents,
            dim,
            times: Vec::with_capacity(samples),
            values: Vec::with_capacity(samples * n_agents * dim),
        }
    }

    /// Appends one sample; `row` holds all agents back to back.
    pub fn push(&mut self, t: f64, row: &[f64]) -> Result<()> {
        if row.len() != self.n_agents * self.dim {
            return Err(Error::Dimension(format!(
                "sample has {} values, expected {}",
                row.len(),
                self.n_agents * self.dim
            )));
        }
        self.times.push(t);
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample(&self, k: usize, i: usize) -> &[f64] {
        let o = (k * self.n_agents + i) * self.dim;
        &self.values[o..o + self.dim]
    }

    pub fn norm(&self, k: usize, i: usize) -> f64 {
        self.sample(k, i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean over agents of `‖s_i(k)‖`.
    pub fn mean_norm(&self, k: usize) -> f64 {
        (0..self.n_agents).map(|i| self.norm(k, i)).sum::<f64>() / self.n_agents as f64
    }

    /// Sample indices with `start ≤ t ≤ end`.
    pub fn window_indices(&self, w: Window) -> impl Iterator<Item = usize> + '_ {
        self.times
            .iter()
            .enumerate()
            .filter(move |(_, &t)| w.contains(t))
            .map(|(k, _)| k)
    }
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const ALL: Self = Self {
        start: f64::NEG_INFINITY,
        end: f64::INFINITY,
    };

    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// `(1/N) Σ_i (1/K) Σ_k s_i(k)ᵀ s_i(k)` over the samples in `window`.
pub fn rms(series: &SignalSeries, window: Window) -> Result<f64> {
    let mut count = 0usize;
    let mut acc = 0.0;
    for k in series.window_indices(window) {
        for i in 0..series.n_agents {
            acc += series.sample(k, i).iter().map(|v| v * v).sum::<f64>();
        }
        count += 1;
    }
    if count == 0 || series.n_agents == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty window [{}, {}]",
            window.start, window.end
        )));
    }
    Ok(acc / (count * series.n_agents) as f64)
}

/// Conventional root-mean-square: the square root of [`rms`].
pub fn sqrt_rms(series: &SignalSeries, window: Window) -> Result<f64> {
    rms(series, window).map(f64::sqrt)
}

/// Mean over samples in `window` of the agent-averaged norm.
pub fn mean_norm(series: &SignalSeries, window: Window) -> Result<f64> {
    let (mut acc, mut count) = (0.0, 0usize);
    for k in series.window_indices(window) {
        acc += series.mean_norm(k);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty window [{}, {}]",
            window.start, window.end
        )));
    }
    Ok(acc / count as f64)
}

/// Sample mean and sample (n − 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
