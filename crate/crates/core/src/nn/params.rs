use serde::{Deserialize, Serialize};

use super::spec::{LayerKind, NetworkSpec};
use super::NnError;
use crate::regularization::{init_weights, InitScheme};
use crate::rng;

/// Weights and biases of one layer. Both are empty for parameter-free layers.
///
/// Dense and output weights are `(out, in)` row-major; convolution weights are
/// `(out_channels, in_channels * kernel * kernel)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable parameters of a network, or a same-shaped gradient / velocity buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<LayerParams>,
    /// Bumped on every in-place update; forward caches remember it.
    #[serde(skip)]
    pub(crate) version: u64,
}

pub type Gradients = Params;

impl Params {
    /// Draws initial weights; biases start at zero. Layer `i` uses its own
    /// stream keyed by `(seed, i)`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Params, NnError> {
        let shapes = spec.shapes()?;
        let mut input = spec.input_shape;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let (fan_in, fan_out) = match layer.kind {
                LayerKind::Dense { out_features } => (input.size(), out_features),
                LayerKind::SoftmaxOutput { classes } => (input.size(), classes),
                LayerKind::Conv2d {
                    out_channels, kernel, ..
                } => (input.channels * kernel * kernel, out_channels),
                LayerKind::MaxPool { .. } | LayerKind::Flatten => (0, 0),
            };
            if fan_out == 0 {
                layers.push(LayerParams::default());
            } else {
                let scheme = InitScheme::new(layer.init_kind(), fan_in)?;
                let weight = init_weights(scheme, fan_in * fan_out, rng::derive_seed(seed, &[rng::tag::INIT, i as u64]))?;
                layers.push(LayerParams {
                    weight,
                    bias: vec![0.0; fan_out],
                });
            }
            input = shapes[i];
        }
        Ok(Params { layers, version: 0 })
    }

    pub fn zeros_like(other: &Params) -> Params {
        Params {
            layers: other
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.len() == b.weight.len() && a.bias.len() == b.bias.len())
    }

    /// Flat view in layer order, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access to flat coordinate `index`; invalidates forward caches.
    pub fn coord_mut(&mut self, index: usize) -> Option<&mut f64> {
        self.version += 1;
        self.iter_mut().nth(index)
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}
