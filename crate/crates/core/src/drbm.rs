//! Greedy layer-wise stack of RBMs and its feed-forward feature map.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rbm::{sample_bernoulli_matrix, train_rbm, train_rbm_on_samples, CdTrainConfig, RbmLayer};
use crate::seed;

/// Default hidden layer sizes of the deep model.
pub const DEFAULT_LAYERS: [usize; 5] = [50, 50, 50, 50, 10];

/// Hidden sizes of the one-layer reference model.
pub const SINGLE_RBM_LAYERS: [usize; 1] = [50];

/// What the next layer is trained on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// One binary sample of `P(h | x)` per row, drawn once per layer.
    Sampled,
    /// The hidden probabilities themselves.
    Probabilities,
    /// A fresh binary sample of `P(h | x)` for every mini-batch.
    #[default]
    Resampled,
}

impl std::str::FromStr for Propagation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Self::Sampled),
            "probabilities" => Ok(Self::Probabilities),
            "resampled" => Ok(Self::Resampled),
            _ => Err(Error::invalid(format!(
                "unknown propagation {s:?} (expected sampled, probabilities or resampled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DrbmRecord", into = "DrbmRecord")]
pub struct DrbmModel {
    layers: Vec<RbmLayer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DrbmRecord {
    layer_sizes: Vec<usize>,
    layers: Vec<RbmLayer>,
}

impl From<DrbmModel> for DrbmRecord {
    fn from(m: DrbmModel) -> Self {
        DrbmRecord {
            layer_sizes: m.layer_sizes(),
            layers: m.layers,
        }
    }
}

impl TryFrom<DrbmRecord> for DrbmModel {
    type Error = Error;

    fn try_from(r: DrbmRecord) -> Result<Self> {
        let model = DrbmModel::from_layers(r.layers)?;
        if model.layer_sizes() != r.layer_sizes {
            return Err(Error::shape(format!(
                "layer_sizes header {:?} disagrees with layers {:?}",
                r.layer_sizes,
                model.layer_sizes()
            )));
        }
        Ok(model)
    }
}

impl DrbmModel {
    /// Stack pre-built layers; adjacent sizes must chain.
    pub fn from_layers(layers: Vec<RbmLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a deep model needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(Error::shape(format!(
                    "layer {l} has {} hidden units but layer {} has {} visible units",
                    pair[0].n_hidden(),
                    l + 1,
                    pair[1].n_visible()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[RbmLayer] {
        &self.layers
    }

    /// `[d, p1, ..., pn]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_visible())
            .chain(self.layers.iter().map(RbmLayer::n_hidden))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_visible()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_hidden()
    }
}

/// Seed used for layer `l`. Layer 0 uses the base seed unchanged, so a
/// one-layer stack is exactly a single trained RBM.
pub fn layer_seed(base: u64, l: usize) -> u64 {
    if l == 0 {
        base
    } else {
        seed::derive(base, "drbm-layer", l as u64)
    }
}

/// Train a stack with [`Propagation::Sampled`] between layers.
pub fn train_drbm(
    data: ArrayView2<'_, f64>,
    hidden_sizes: &[usize],
    config: &CdTrainConfig,
) -> Result<DrbmModel> {
    train_drbm_with(data, hidden_sizes, config, Propagation::default())
}

/// Train layer 1 on `data`, then each following layer on the previous
/// layer's activations over the whole dataset.
pub fn train_drbm_with(
    data: ArrayView2<'_, f64>,
    hidden_sizes: &[usize],
    config: &CdTrainConfig,
    propagation: Propagation,
) -> Result<DrbmModel> {
    if hidden_sizes.is_empty() {
        return Err(Error::invalid("hidden_sizes must not be empty"));
    }
    let mut input = data.to_owned();
    let mut layers = Vec::with_capacity(hidden_sizes.len());
    for (l, &p) in hidden_sizes.iter().enumerate() {
        let s = layer_seed(config.seed, l);
        let cfg = CdTrainConfig {
            seed: s,
            ..config.clone()
        };
        let init = RbmLayer::new(input.ncols(), p, s)?;
        let layer = if l > 0 && propagation == Propagation::Resampled {
            train_rbm_on_samples(init, input.view(), &cfg)?
        } else {
            train_rbm(init, input.view(), &cfg)?
        };
        if l + 1 < hidden_sizes.len() {
            let probs = layer.hidden_probs(input.view())?;
            input = match propagation {
                Propagation::Probabilities | Propagation::Resampled => probs,
                Propagation::Sampled => {
                    let mut rng = seed::stream(config.seed, "drbm-propagate", l as u64);
                    sample_bernoulli_matrix(probs.view(), &mut rng)
                }
            };
        }
        layers.push(layer);
    }
    DrbmModel::from_layers(layers)
}

/// Deterministic feed-forward pass returning the top layer's hidden
/// probabilities for each row.
pub fn extract_features(model: &DrbmModel, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if data.ncols() != model.input_dim() {
        return Err(Error::shape(format!(
            "model expects {} input columns, got {}",
            model.input_dim(),
            data.ncols()
        )));
    }
    let mut x = data.to_owned();
    for layer in &model.layers {
        x = layer.hidden_probs(x.view())?;
    }
    Ok(x)
}

/// Bias-free stack energy `-v W1 h1 - h1 W2 h2 - ... - h(n-1) Wn hn`.
pub fn drbm_energy(
    model: &DrbmModel,
    v: ArrayView1<'_, f64>,
    hs: &[Array1<f64>],
) -> Result<f64> {
    if hs.len() != model.layers.len() {
        return Err(Error::shape(format!(
            "{} hidden activations for {} layers",
            hs.len(),
            model.layers.len()
        )));
    }
    let mut below = v;
    let mut energy = 0.0;
    for (layer, h) in model.layers.iter().zip(hs) {
        if below.len() != layer.n_visible() || h.len() != layer.n_hidden() {
            return Err(Error::shape(format!(
                "activation sizes {}x{} do not fit a {}x{} layer",
                below.len(),
                h.len(),
                layer.n_visible(),
                layer.n_hidden()
            )));
        }
        energy -= below.dot(&layer.weights().dot(h));
        below = h.view();
    }
    Ok(energy)
}
