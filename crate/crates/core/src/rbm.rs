//! A single restricted Boltzmann machine trained with one-step contrastive
//! divergence.
//!
//! Visible units take real values in `[0, 1]` (min-max scaled data is fed
//! in directly); hidden units are Bernoulli. The joint energy is
//!
//! ```text
//! E(v, h) = -sum_ij w_ij v_i h_j - sum_i b_i v_i - sum_j c_j h_j
//! ```
//!
//! and both conditionals factorise into per-unit logistic sigmoids.
//! [`exact_joint`] enumerates the Boltzmann distribution of very small
//! binary layers and is what the conditional formulas are tested against.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_SD: f64 = 0.01;

/// Default learning-rate time constant as a fraction of the epoch budget.
pub const DEFAULT_DECAY_FRACTION: f64 = 0.25;

/// Largest `d + p` accepted by [`exact_joint`].
pub const MAX_ENUMERATION_UNITS: usize = 20;

/// Logistic sigmoid, clamped to the open unit interval so that saturated
/// units still report a probability strictly between 0 and 1.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Weights and biases of one RBM: `weights` is `d x p` (visible x hidden).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbmRecord", into = "RbmRecord")]
pub struct RbmLayer {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
}

/// Flat on-disk form of an [`RbmLayer`]; weights are row-major `d x p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmRecord {
    pub d: usize,
    pub p: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl From<RbmLayer> for RbmRecord {
    fn from(layer: RbmLayer) -> Self {
        let (d, p) = layer.weights.dim();
        RbmRecord {
            d,
            p,
            weights: layer.weights.iter().copied().collect(),
            visible_bias: layer.visible_bias.to_vec(),
            hidden_bias: layer.hidden_bias.to_vec(),
        }
    }
}

impl TryFrom<RbmRecord> for RbmLayer {
    type Error = Error;

    fn try_from(r: RbmRecord) -> Result<Self> {
        let weights = Array2::from_shape_vec((r.d, r.p), r.weights)
            .map_err(|e| Error::shape(format!("rbm weights: {e}")))?;
        RbmLayer::from_parts(weights, r.visible_bias.into(), r.hidden_bias.into())
    }
}

impl RbmLayer {
    /// Layer with `N(0, 0.01^2)` weights and zero biases.
    pub fn new(d: usize, p: usize, seed: u64) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::invalid(format!("rbm needs d, p >= 1, got {d}x{p}")));
        }
        let mut rng = seed::stream(seed, "rbm-init", 0);
        let normal = Normal::new(0.0, INIT_WEIGHT_SD).expect("constant sd");
        let weights = Array2::from_shape_simple_fn((d, p), || normal.sample(&mut rng));
        Ok(Self {
            weights,
            visible_bias: Array1::zeros(d),
            hidden_bias: Array1::zeros(p),
        })
    }

    pub fn from_parts(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let (d, p) = weights.dim();
        if d == 0 || p == 0 {
            return Err(Error::invalid(format!("rbm needs d, p >= 1, got {d}x{p}")));
        }
        if visible_bias.len() != d || hidden_bias.len() != p {
            return Err(Error::shape(format!(
                "weights {d}x{p} with bias lengths {} and {}",
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let finite = weights
            .iter()
            .chain(visible_bias.iter())
            .chain(hidden_bias.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("rbm parameters must be finite"));
        }
        Ok(Self {
            weights,
            visible_bias,
            hidden_bias,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn visible_bias(&self) -> ArrayView1<'_, f64> {
        self.visible_bias.view()
    }

    pub fn hidden_bias(&self) -> ArrayView1<'_, f64> {
        self.hidden_bias.view()
    }

    /// Joint energy of a visible/hidden configuration.
    pub fn energy(&self, v: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_visible(v.len())?;
        self.check_hidden(h.len())?;
        let interaction = v.dot(&self.weights.dot(&h));
        Ok(-interaction - self.visible_bias.dot(&v) - self.hidden_bias.dot(&h))
    }

    /// `P(h_j = 1 | v) = sigmoid(sum_i v_i w_ij + c_j)`.
    pub fn prob_h_given_v(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_visible(v.len())?;
        Ok((v.dot(&self.weights) + &self.hidden_bias).mapv(sigmoid))
    }

    /// `P(v_i = 1 | h) = sigmoid(sum_j h_j w_ij + b_i)`.
    pub fn prob_v_given_h(&self, h: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_hidden(h.len())?;
        Ok((self.weights.dot(&h) + &self.visible_bias).mapv(sigmoid))
    }

    /// Row-wise [`prob_h_given_v`](Self::prob_h_given_v) for an `m x d` batch.
    pub fn hidden_probs(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_visible(v.ncols())?;
        Ok((v.dot(&self.weights) + &self.hidden_bias).mapv(sigmoid))
    }

    /// Row-wise [`prob_v_given_h`](Self::prob_v_given_h) for an `m x p` batch.
    pub fn visible_probs(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_hidden(h.ncols())?;
        Ok((h.dot(&self.weights.t()) + &self.visible_bias).mapv(sigmoid))
    }

    /// One CD-1 update on an `m x d` batch, in place.
    ///
    /// Positive statistics use the hidden probabilities `h0 = P(h | v0)`.
    /// The reconstruction `v1 = P(v | s)` is driven by a binary sample
    /// `s ~ h0` and kept mean-field, and `h1 = P(h | v1)`. Then
    ///
    /// ```text
    /// dW = eps (v0' h0 - v1' h1) / m
    /// db = eps mean(v0 - v1)
    /// dc = eps mean(h0 - h1)
    /// ```
    ///
    /// A non-finite update is rejected and leaves the layer untouched.
    /// `epsilon == 0` leaves every parameter bit-for-bit unchanged.
    pub fn cd1_step(
        &mut self,
        batch: ArrayView2<'_, f64>,
        epsilon: f64,
        rng: &mut Rng,
    ) -> Result<CdStep> {
        self.check_visible(batch.ncols())?;
        if batch.nrows() == 0 {
            return Err(Error::invalid("cd1_step needs a non-empty batch"));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be >= 0, got {epsilon}")));
        }
        let m = batch.nrows() as f64;

        let h0 = self.hidden_probs(batch)?;
        let hs = sample_bernoulli_matrix(h0.view(), rng);
        let v1 = self.visible_probs(hs.view())?;
        let h1 = self.hidden_probs(v1.view())?;

        let positive = batch.t().dot(&h0);
        let negative = v1.t().dot(&h1);
        let dv = &batch - &v1;
        let reconstruction_error = dv.mapv(|x| x * x).sum() / m;

        if epsilon == 0.0 {
            return Ok(CdStep {
                reconstruction_error,
            });
        }

        let dw = (positive - negative) * (epsilon / m);
        let db = dv.sum_axis(Axis(0)) * (epsilon / m);
        let dc = (&h0 - &h1).sum_axis(Axis(0)) * (epsilon / m);

        let new_w = &self.weights + &dw;
        let new_b = &self.visible_bias + &db;
        let new_c = &self.hidden_bias + &dc;
        let finite = new_w
            .iter()
            .chain(new_b.iter())
            .chain(new_c.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical(format!(
                "non-finite CD update at learning rate {epsilon}; lower the rate"
            )));
        }
        self.weights = new_w;
        self.visible_bias = new_b;
        self.hidden_bias = new_c;
        Ok(CdStep {
            reconstruction_error,
        })
    }

    /// Mean squared reconstruction error `|v - P(v | h0)|^2` over rows, using
    /// mean-field hidden activations. Deterministic.
    pub fn reconstruction_error(&self, data: ArrayView2<'_, f64>) -> Result<f64> {
        let h = self.hidden_probs(data)?;
        let v = self.visible_probs(h.view())?;
        let n = data.nrows().max(1) as f64;
        Ok((&data - &v).mapv(|x| x * x).sum() / n)
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.n_visible() {
            return Err(Error::shape(format!(
                "expected {} visible units, got {len}",
                self.n_visible()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, len: usize) -> Result<()> {
        if len != self.n_hidden() {
            return Err(Error::shape(format!(
                "expected {} hidden units, got {len}",
                self.n_hidden()
            )));
        }
        Ok(())
    }
}

/// Per-step statistics from [`RbmLayer::cd1_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdStep {
    /// Mean over the batch of `|v0 - v1|^2`.
    pub reconstruction_error: f64,
}

/// Draw independent Bernoulli variables with the given probabilities.
pub fn sample_bernoulli(probs: ArrayView1<'_, f64>, rng: &mut Rng) -> Result<Array1<f64>> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs.mapv(|p| bernoulli(p, rng)))
}

fn bernoulli(p: f64, rng: &mut Rng) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Matrix version of [`sample_bernoulli`] for probabilities already known to
/// lie in `[0, 1]`.
pub(crate) fn sample_bernoulli_matrix(probs: ArrayView2<'_, f64>, rng: &mut Rng) -> Array2<f64> {
    probs.mapv(|p| bernoulli(p, rng))
}

/// Contrastive-divergence training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdTrainConfig {
    pub epochs: usize,
    /// Learning rate at epoch 0.
    pub initial_lr: f64,
    /// Time constant `T` of `lr(t) = lr0 * exp(-t / T)`; `None` means
    /// `T = DEFAULT_DECAY_FRACTION * epochs`.
    pub lr_decay_time: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CdTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            initial_lr: 0.1,
            lr_decay_time: None,
            batch_size: 10,
            seed: 0,
        }
    }
}

impl CdTrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::invalid(format!(
                "initial learning rate must be > 0, got {}",
                self.initial_lr
            )));
        }
        if let Some(t) = self.lr_decay_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("lr decay time must be > 0, got {t}")));
            }
        }
        if self.batch_size == 0 || self.batch_size > n_samples {
            return Err(Error::invalid(format!(
                "batch size {} must be within 1..={n_samples}",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Learning rate used during `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let t = self
            .lr_decay_time
            .unwrap_or(DEFAULT_DECAY_FRACTION * self.epochs as f64);
        self.initial_lr * (-(epoch as f64) / t).exp()
    }
}

/// Train `layer` on `data` (rows are samples, scaled into `[0, 1]`).
pub fn train_rbm(
    layer: RbmLayer,
    data: ArrayView2<'_, f64>,
    config: &CdTrainConfig,
) -> Result<RbmLayer> {
    train_rbm_with_history(layer, data, config).map(|(layer, _)| layer)
}

/// Like [`train_rbm`], also returning the mean per-step reconstruction
/// error of every epoch.
pub fn train_rbm_with_history(
    layer: RbmLayer,
    data: ArrayView2<'_, f64>,
    config: &CdTrainConfig,
) -> Result<(RbmLayer, Vec<f64>)> {
    train_loop(layer, data, config, false)
}

/// Train on binary samples of `probs`: every mini-batch is a fresh
/// Bernoulli draw of its rows.
pub fn train_rbm_on_samples(
    layer: RbmLayer,
    probs: ArrayView2<'_, f64>,
    config: &CdTrainConfig,
) -> Result<RbmLayer> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("sampling probabilities must lie in [0, 1]"));
    }
    train_loop(layer, probs, config, true).map(|(layer, _)| layer)
}

fn train_loop(
    mut layer: RbmLayer,
    data: ArrayView2<'_, f64>,
    config: &CdTrainConfig,
    resample: bool,
) -> Result<(RbmLayer, Vec<f64>)> {
    layer.check_visible(data.ncols())?;
    config.validate(data.nrows())?;
    let mut rng = seed::stream(config.seed, "rbm-cd", 0);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = data.select(Axis(0), chunk);
            if resample {
                batch = sample_bernoulli_matrix(batch.view(), &mut rng);
            }
            total += layer.cd1_step(batch.view(), lr, &mut rng)?.reconstruction_error;
            steps += 1;
        }
        history.push(total / steps as f64);
    }
    Ok((layer, history))
}

/// Exact Boltzmann distribution over all binary `(v, h)` of a small layer.
///
/// Configurations are indexed by bit masks; bit `i` of `v` is visible unit
/// `i` and bit `j` of `h` is hidden unit `j`.
#[derive(Debug, Clone)]
pub struct JointTable {
    d: usize,
    p: usize,
    probs: Vec<f64>,
    log_partition: f64,
}

impl JointTable {
    pub fn prob(&self, v: usize, h: usize) -> f64 {
        self.probs[(v << self.p) | h]
    }

    /// `ln Z`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal `P(v)`.
    pub fn marginal_v(&self, v: usize) -> f64 {
        (0..1usize << self.p).map(|h| self.prob(v, h)).sum()
    }

    /// Marginal `P(h)`.
    pub fn marginal_h(&self, h: usize) -> f64 {
        (0..1usize << self.d).map(|v| self.prob(v, h)).sum()
    }

    /// `P(h_j = 1 | v)` for every `j`, by summing table entries.
    pub fn hidden_conditional(&self, v: usize) -> Vec<f64> {
        let pv = self.marginal_v(v);
        (0..self.p)
            .map(|j| {
                (0..1usize << self.p)
                    .filter(|h| h >> j & 1 == 1)
                    .map(|h| self.prob(v, h))
                    .sum::<f64>()
                    / pv
            })
            .collect()
    }

    /// `P(v_i = 1 | h)` for every `i`, by summing table entries.
    pub fn visible_conditional(&self, h: usize) -> Vec<f64> {
        let ph = self.marginal_h(h);
        (0..self.d)
            .map(|i| {
                (0..1usize << self.d)
                    .filter(|v| v >> i & 1 == 1)
                    .map(|v| self.prob(v, h))
                    .sum::<f64>()
                    / ph
            })
            .collect()
    }

    /// Full conditional `P(h | v)` of one hidden configuration.
    pub fn conditional_h(&self, h: usize, v: usize) -> f64 {
        self.prob(v, h) / self.marginal_v(v)
    }
}

/// Unpack the low `n` bits of `mask` into a 0/1 vector.
pub fn bits(mask: usize, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| (mask >> i & 1) as f64)
}

/// Enumerate `P(v, h) = exp(-E(v, h)) / Z` over all `2^(d+p)` binary
/// configurations.
pub fn exact_joint(layer: &RbmLayer) -> Result<JointTable> {
    let (d, p) = (layer.n_visible(), layer.n_hidden());
    if d + p > MAX_ENUMERATION_UNITS {
        return Err(Error::invalid(format!(
            "exact enumeration limited to d + p <= {MAX_ENUMERATION_UNITS}, got {}",
            d + p
        )));
    }
    let hs: Vec<Array1<f64>> = (0..1usize << p).map(|h| bits(h, p)).collect();
    let mut neg_energy = Vec::with_capacity(1 << (d + p));
    for v in 0..1usize << d {
        let vb = bits(v, d);
        for h in &hs {
            neg_energy.push(-layer.energy(vb.view(), h.view())?);
        }
    }
    let max = neg_energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = neg_energy.iter().map(|e| (e - max).exp()).sum();
    let log_partition = max + sum.ln();
    let probs = neg_energy
        .iter()
        .map(|e| (e - log_partition).exp())
        .collect();
    Ok(JointTable {
        d,
        p,
        probs,
        log_partition,
    })
}
