//! One-dimensional self-organising map with exponentially decaying
//! learning rate and Gaussian neighbourhood.
//!
//! Neuron `j` owns column `j` of an `n_i x n_o` weight matrix. Neurons sit
//! on a line, so the lattice distance between `i` and `j` is `|i - j|`.
//! At step `t` the neighbourhood of winner `c` is
//!
//! ```text
//! h_cj(t) = alpha(t) exp(-|c - j|^2 / (2 sigma(t)^2))
//! alpha(t) = alpha0 exp(-t / T1),   sigma(t) = sigma0 exp(-t / T2)
//! ```

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_ALPHA0: f64 = 0.5;
/// Training steps per sample.
pub const ITERATIONS_PER_SAMPLE: usize = 100;

/// Denominator of the neighbourhood exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodDenom {
    /// `2 sigma(t)^2`, the usual Gaussian kernel.
    #[default]
    SigmaSquared,
    /// `2 sigma(t)`.
    Sigma,
}

impl std::str::FromStr for NeighborhoodDenom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma-squared" => Ok(Self::SigmaSquared),
            "sigma" => Ok(Self::Sigma),
            _ => Err(Error::invalid(format!(
                "unknown neighbourhood denominator {s:?} (expected sigma or sigma-squared)"
            ))),
        }
    }
}

/// Decay constants of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha0: f64,
    pub sigma0: f64,
    pub t1: f64,
    pub t2: f64,
    pub total_iterations: usize,
    pub denom: NeighborhoodDenom,
}

impl Schedule {
    /// `alpha0 = 0.5`, `sigma0 = max(n_o / 2, 1)`, `T1 = iterations` and
    /// `T2 = iterations / ln(max(sigma0, 1 + 1e-9))`, so the width shrinks
    /// to about 1 by the last step.
    pub fn standard(n_o: usize, iterations: usize) -> Self {
        let sigma0 = (n_o as f64 / 2.0).max(1.0);
        let iters = iterations.max(1) as f64;
        Self {
            alpha0: DEFAULT_ALPHA0,
            sigma0,
            t1: iters,
            t2: iters / sigma0.max(1.0 + 1e-9).ln(),
            total_iterations: iterations.max(1),
            denom: NeighborhoodDenom::default(),
        }
    }

    /// Like [`standard`](Self::standard) but with `T2` chosen so that
    /// `sigma` decays to `final_sigma` at the last step. A `final_sigma`
    /// of 1 reproduces the standard schedule whenever `sigma0 > 1`.
    pub fn with_final_sigma(n_o: usize, iterations: usize, final_sigma: f64) -> Result<Self> {
        if !(final_sigma > 0.0 && final_sigma.is_finite()) {
            return Err(Error::invalid(format!("final sigma must be > 0, got {final_sigma}")));
        }
        let mut s = Self::standard(n_o, iterations);
        let ratio = s.sigma0 / final_sigma;
        if ratio > 1.0 + 1e-9 {
            s.t2 = s.t1 / ratio.ln();
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma0, self.t1, self.t2]
            .iter()
            .all(|v| *v > 0.0 && !v.is_nan());
        if !positive || self.total_iterations == 0 {
            return Err(Error::invalid("schedule constants must be strictly positive"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::invalid(format!("alpha0 must lie in (0, 1], got {}", self.alpha0)));
        }
        Ok(())
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha0 * (-(t as f64) / self.t1).exp()
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma0 * (-(t as f64) / self.t2).exp()
    }

    /// Neighbourhood weight at lattice distance `dist` and step `t`.
    pub fn weight(&self, dist: usize, t: usize) -> f64 {
        let s = self.sigma(t);
        let denom = match self.denom {
            NeighborhoodDenom::SigmaSquared => 2.0 * s * s,
            NeighborhoodDenom::Sigma => 2.0 * s,
        };
        let d = dist as f64;
        self.alpha(t) * (-(d * d) / denom).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KohonenRecord", into = "KohonenRecord")]
pub struct KohonenNet {
    weights: Array2<f64>,
    schedule: Schedule,
}

/// Flat on-disk form; weights are row-major `n_i x n_o`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct KohonenRecord {
    n_i: usize,
    n_o: usize,
    #[serde(flatten)]
    schedule: Schedule,
    weights: Vec<f64>,
}

impl From<KohonenNet> for KohonenRecord {
    fn from(net: KohonenNet) -> Self {
        let (n_i, n_o) = net.weights.dim();
        KohonenRecord {
            n_i,
            n_o,
            schedule: net.schedule,
            weights: net.weights.iter().copied().collect(),
        }
    }
}

impl TryFrom<KohonenRecord> for KohonenNet {
    type Error = Error;

    fn try_from(r: KohonenRecord) -> Result<Self> {
        let w = Array2::from_shape_vec((r.n_i, r.n_o), r.weights)
            .map_err(|e| Error::shape(format!("kohonen weights: {e}")))?;
        KohonenNet::from_parts(w, r.schedule)
    }
}

/// Net with weights drawn uniformly from `[0.1, 0.9]` and the standard
/// schedule for `iterations` steps.
pub fn init_kohonen(n_i: usize, n_o: usize, iterations: usize, seed: u64) -> Result<KohonenNet> {
    KohonenNet::new(n_i, n_o, Schedule::standard(n_o, iterations), seed)
}

impl KohonenNet {
    pub fn new(n_i: usize, n_o: usize, schedule: Schedule, seed: u64) -> Result<Self> {
        if n_i == 0 || n_o == 0 {
            return Err(Error::invalid(format!("kohonen net needs n_i, n_o >= 1, got {n_i}x{n_o}")));
        }
        let mut rng = seed::stream(seed, "som-init", 0);
        let weights = Array2::from_shape_simple_fn((n_i, n_o), || rng.random_range(0.1..=0.9));
        Self::from_parts(weights, schedule)
    }

    pub fn from_parts(weights: Array2<f64>, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        if weights.is_empty() {
            return Err(Error::invalid("kohonen weights are empty"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("kohonen weights must be finite"));
        }
        Ok(Self { weights, schedule })
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.n_inputs() {
            return Err(Error::shape(format!(
                "net expects {} inputs, got {len}",
                self.n_inputs()
            )));
        }
        Ok(())
    }

    fn winner_unchecked(&self, x: ArrayView1<'_, f64>) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, col) in self.weights.columns().into_iter().enumerate() {
            let d: f64 = x.iter().zip(col).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Single update towards `x` at step `t`; returns the winner.
    pub fn update(&mut self, x: ArrayView1<'_, f64>, t: usize) -> Result<usize> {
        self.check_input(x.len())?;
        let (c, _) = self.winner_unchecked(x);
        for j in 0..self.n_outputs() {
            let h = self.schedule.weight(c.abs_diff(j), t);
            if h == 0.0 {
                continue;
            }
            let mut col = self.weights.column_mut(j);
            col.zip_mut_with(&x, |w, &xi| *w += h * (xi - *w));
        }
        Ok(c)
    }

    /// Sum over samples of the squared distance to the winning neuron.
    pub fn quantization_error(&self, features: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_input(features.ncols())?;
        Ok(features
            .rows()
            .into_iter()
            .map(|r| self.winner_unchecked(r).1)
            .sum())
    }
}

/// Index of the neuron closest to `x` in Euclidean distance; ties go to
/// the lowest index.
pub fn find_winner(net: &KohonenNet, x: ArrayView1<'_, f64>) -> Result<usize> {
    net.check_input(x.len())?;
    Ok(net.winner_unchecked(x).0)
}

/// `h_cj(t)` for winner `winner` and neuron `j`.
pub fn neighborhood(net: &KohonenNet, winner: usize, j: usize, t: usize) -> Result<f64> {
    let n = net.n_outputs();
    if winner >= n || j >= n {
        return Err(Error::invalid(format!(
            "neuron index out of range: winner {winner}, j {j}, n_o {n}"
        )));
    }
    Ok(net.schedule.weight(winner.abs_diff(j), t))
}

/// Run `iterations` single-sample updates, visiting samples in a fresh
/// random order on every pass over the data.
pub fn train_kohonen(
    mut net: KohonenNet,
    features: ArrayView2<'_, f64>,
    iterations: usize,
    seed: u64,
) -> Result<KohonenNet> {
    net.check_input(features.ncols())?;
    if iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    let n = features.nrows();
    if n == 0 {
        return Err(Error::invalid("no samples to train on"));
    }
    let mut rng = seed::stream(seed, "som-order", 0);
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..iterations {
        if t % n == 0 {
            order.shuffle(&mut rng);
        }
        net.update(features.row(order[t % n]), t)?;
    }
    if net.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("kohonen weights became non-finite".into()));
    }
    Ok(net)
}

/// Winner index of every row.
pub fn assign_clusters(net: &KohonenNet, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    net.check_input(features.ncols())?;
    Ok(features
        .rows()
        .into_iter()
        .map(|r| net.winner_unchecked(r).0)
        .collect())
}
