//! Network and training descriptions.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::activations::ActivationKind;
use crate::curve::LearningCurve;
use crate::data::Split;
use crate::regularization::{DropoutSpec, InitKind};

/// Per-sample tensor shape `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize, usize)", into = "(usize, usize, usize)")]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    /// A flat vector of `n` features.
    pub const fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub const fn size(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl From<(usize, usize, usize)> for Shape {
    fn from((c, h, w): (usize, usize, usize)) -> Self {
        Shape::new(c, h, w)
    }
}

impl From<Shape> for (usize, usize, usize) {
    fn from(s: Shape) -> Self {
        (s.channels, s.height, s.width)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// Fully connected; the input is implicitly flattened.
    Dense { out_features: usize },
    Conv2d {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    MaxPool { kernel: usize, stride: usize },
    Flatten,
    /// Final dense projection to class logits, trained with softmax cross-entropy.
    SoftmaxOutput { classes: usize },
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } | LayerKind::SoftmaxOutput { .. }
        )
    }

    fn is_activated(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<DropoutSpec>,
    /// Explicit initializer; when absent it is matched to the activation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
}

impl LayerSpec {
    pub fn dense(out_features: usize, activation: ActivationKind) -> Self {
        LayerSpec::activated(LayerKind::Dense { out_features }, activation)
    }

    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize, activation: ActivationKind) -> Self {
        LayerSpec::activated(
            LayerKind::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
            },
            activation,
        )
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec::plain(LayerKind::MaxPool { kernel, stride })
    }

    pub fn flatten() -> Self {
        LayerSpec::plain(LayerKind::Flatten)
    }

    pub fn output(classes: usize) -> Self {
        LayerSpec::plain(LayerKind::SoftmaxOutput { classes })
    }

    fn activated(kind: LayerKind, activation: ActivationKind) -> Self {
        LayerSpec {
            kind,
            activation: Some(activation),
            dropout: None,
            init: None,
        }
    }

    fn plain(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            activation: None,
            dropout: None,
            init: None,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        let act = self.activation.unwrap_or(ActivationKind::RELU);
        self.dropout = Some(DropoutSpec::for_activation(rate, &act));
        self
    }

    pub fn init_kind(&self) -> InitKind {
        self.init.unwrap_or_else(|| match &self.activation {
            Some(a) => InitKind::for_activation(a),
            None => InitKind::LeCunNormal,
        })
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout.map_or(0.0, |d| d.rate)
    }
}

/// Ordered layer list plus input shape: the genome the search edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Validates the layer chain and returns each layer's output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        if self.input_shape.size() == 0 {
            return Err(NnError::Config("input shape has zero size".into()));
        }
        let Some(last) = self.layers.last() else {
            return Err(NnError::Config("network has no layers".into()));
        };
        if !matches!(last.kind, LayerKind::SoftmaxOutput { .. }) {
            return Err(NnError::Config("last layer must be softmax_output".into()));
        }
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let at = |msg: String| NnError::Config(format!("layer {i}: {msg}"));
            let is_last = i + 1 == self.layers.len();
            if matches!(layer.kind, LayerKind::SoftmaxOutput { .. }) && !is_last {
                return Err(at("softmax_output is only allowed as the last layer".into()));
            }
            if layer.kind.is_activated() {
                let Some(act) = &layer.activation else {
                    return Err(at("dense/conv2d layers need an activation".into()));
                };
                act.validate().map_err(|e| at(e.to_string()))?;
                if let Some(d) = &layer.dropout {
                    d.validate().map_err(|e| at(e.to_string()))?;
                    if !d.matches(act) {
                        return Err(at(format!("{:?} dropout does not match {act} activation", d.mode)));
                    }
                }
            } else if layer.activation.is_some() || layer.dropout.is_some() {
                return Err(at("only dense/conv2d layers carry an activation or dropout".into()));
            }
            shape = match layer.kind {
                LayerKind::Dense { out_features } => {
                    if out_features == 0 {
                        return Err(at("out_features must be >= 1".into()));
                    }
                    Shape::flat(out_features)
                }
                LayerKind::SoftmaxOutput { classes } => {
                    if classes < 2 {
                        return Err(at("softmax_output needs at least 2 classes".into()));
                    }
                    Shape::flat(classes)
                }
                LayerKind::Flatten => Shape::flat(shape.size()),
                LayerKind::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(at("conv2d out_channels, kernel and stride must be >= 1".into()));
                    }
                    let h = shape.height + 2 * padding;
                    let w = shape.width + 2 * padding;
                    if h < kernel || w < kernel {
                        return Err(at(format!("kernel {kernel} larger than padded input {shape}")));
                    }
                    Shape::new(out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1)
                }
                LayerKind::MaxPool { kernel, stride } => {
                    if kernel == 0 || stride == 0 {
                        return Err(at("max_pool kernel and stride must be >= 1".into()));
                    }
                    if shape.height < kernel || shape.width < kernel {
                        return Err(at(format!("pool kernel {kernel} larger than input {shape}")));
                    }
                    Shape::new(
                        shape.channels,
                        (shape.height - kernel) / stride + 1,
                        (shape.width - kernel) / stride + 1,
                    )
                }
            };
            out.push(shape);
        }
        if self.searchable_layers().is_empty() {
            return Err(NnError::Config("network has no searchable activation layer".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.shapes().map(|_| ())
    }

    pub fn classes(&self) -> usize {
        match self.layers.last().map(|l| l.kind) {
            Some(LayerKind::SoftmaxOutput { classes }) => classes,
            _ => 0,
        }
    }

    /// Indices of layers whose activation and dropout are searchable.
    pub fn searchable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.is_activated())
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with layer `index` set to `activation` and matching dropout at `rate`.
    pub fn with_choice(&self, index: usize, activation: ActivationKind, rate: f64) -> NetworkSpec {
        let mut next = self.clone();
        let layer = &mut next.layers[index];
        layer.activation = Some(activation);
        layer.dropout = Some(DropoutSpec::for_activation(rate, &activation));
        layer.init = None;
        next
    }

    /// Every searchable layer pairs alpha dropout with SELU and standard dropout otherwise.
    pub fn dropout_is_legal(&self) -> bool {
        self.layers.iter().all(|l| match (&l.activation, &l.dropout) {
            (Some(a), Some(d)) => d.matches(a),
            _ => true,
        })
    }

    /// `ACT@rate` per searchable layer, e.g. `SELU@0.2 ELU@0.02 ELU@0.05`.
    pub fn describe(&self) -> String {
        self.searchable_layers()
            .into_iter()
            .map(|i| {
                let l = &self.layers[i];
                format!("{}@{}", l.activation.map_or("-", |a| a.name()), l.dropout_rate())
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Same network with every searchable layer set to `activation` and no dropout.
    pub fn uniform(&self, activation: ActivationKind) -> NetworkSpec {
        let mut next = self.clone();
        for i in self.searchable_layers() {
            next = next.with_choice(i, activation, 0.0);
        }
        next
    }

    /// LeNet-5 for 1x28x28 inputs: two convolutions and one hidden dense layer
    /// are searchable, the classifier is not.
    pub fn lenet5() -> NetworkSpec {
        let relu = ActivationKind::RELU;
        NetworkSpec {
            input_shape: Shape::new(1, 28, 28),
            layers: vec![
                LayerSpec::conv(6, 5, 1, 2, relu),
                LayerSpec::max_pool(2, 2),
                LayerSpec::conv(16, 5, 1, 0, relu),
                LayerSpec::max_pool(2, 2),
                LayerSpec::flatten(),
                LayerSpec::dense(120, relu),
                LayerSpec::output(10),
            ],
        }
        .uniform(relu)
    }

    /// Multi-layer perceptron with ReLU hidden layers.
    pub fn mlp(input_shape: Shape, hidden: &[usize], classes: usize) -> NetworkSpec {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::dense(h, ActivationKind::RELU)).collect();
        layers.push(LayerSpec::output(classes));
        NetworkSpec { input_shape, layers }.uniform(ActivationKind::RELU)
    }

    /// AlexNet adapted to 3x32x32 inputs: five convolutions, two hidden dense layers.
    pub fn alexnet_cifar(classes: usize) -> NetworkSpec {
        let r = ActivationKind::RELU;
        NetworkSpec {
            input_shape: Shape::new(3, 32, 32),
            layers: vec![
                LayerSpec::conv(64, 3, 1, 1, r),
                LayerSpec::max_pool(2, 2),
                LayerSpec::conv(192, 3, 1, 1, r),
                LayerSpec::max_pool(2, 2),
                LayerSpec::conv(384, 3, 1, 1, r),
                LayerSpec::conv(256, 3, 1, 1, r),
                LayerSpec::conv(256, 3, 1, 1, r),
                LayerSpec::max_pool(2, 2),
                LayerSpec::flatten(),
                LayerSpec::dense(1024, r),
                LayerSpec::dense(1024, r),
                LayerSpec::output(classes),
            ],
        }
        .uniform(r)
    }

    /// VGG-16 adapted to 3x32x32 inputs: thirteen convolutions, two hidden dense layers.
    pub fn vgg16_cifar(classes: usize) -> NetworkSpec {
        let r = ActivationKind::RELU;
        let mut layers = Vec::new();
        let blocks: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
        for widths in blocks {
            for &w in widths {
                layers.push(LayerSpec::conv(w, 3, 1, 1, r));
            }
            layers.push(LayerSpec::max_pool(2, 2));
        }
        layers.push(LayerSpec::flatten());
        layers.push(LayerSpec::dense(512, r));
        layers.push(LayerSpec::dense(512, r));
        layers.push(LayerSpec::output(classes));
        NetworkSpec {
            input_shape: Shape::new(3, 32, 32),
            layers,
        }
        .uniform(r)
    }

    /// Built-in architectures by name.
    pub fn builtin(name: &str) -> Option<NetworkSpec> {
        match name {
            "lenet5" => Some(Self::lenet5()),
            "mlp2" => Some(Self::mlp(Shape::new(1, 28, 28), &[64, 32], 10)),
            "alexnet-cifar10" => Some(Self::alexnet_cifar(10)),
            "alexnet-cifar100" => Some(Self::alexnet_cifar(100)),
            "vgg16-cifar10" => Some(Self::vgg16_cifar(10)),
            "vgg16-cifar100" => Some(Self::vgg16_cifar(100)),
            _ => None,
        }
    }

    pub const BUILTINS: &'static [&'static str] = &[
        "lenet5",
        "mlp2",
        "alexnet-cifar10",
        "alexnet-cifar100",
        "vgg16-cifar10",
        "vgg16-cifar100",
    ];
}

/// SGD hyperparameters and schedule for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Epochs after which the learning rate is multiplied by `lr_gamma`.
    #[serde(default)]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub lr_gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_split: Split,
}

fn default_gamma() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_milestones: Vec::new(),
            lr_gamma: 0.1,
            seed: 0,
            eval_split: Split::Eval,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |field: &str, msg: String| Err(NnError::Config(format!("train.{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0", format!("must be finite and > 0, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("must be finite and >= 0, got {}", self.weight_decay));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return bad("lr_gamma", format!("must lie in (0, 1], got {}", self.lr_gamma));
        }
        let mut prev = 0;
        for &m in &self.lr_milestones {
            if m <= prev {
                return bad("lr_milestones", "must be strictly increasing and >= 1".into());
            }
            if m > self.epochs {
                return bad("lr_milestones", format!("milestone {m} exceeds epochs {}", self.epochs));
            }
            prev = m;
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_milestones.iter().filter(|&&m| m < epoch).count();
        self.lr0 * self.lr_gamma.powi(decays as i32)
    }

    /// The same schedule cut off after `epochs` epochs.
    pub fn truncated(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            lr_milestones: self.lr_milestones.iter().copied().filter(|&m| m <= epochs).collect(),
            ..self.clone()
        }
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub curve: LearningCurve,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Evaluation accuracy after the last epoch, in percent.
    pub final_test_accuracy: f64,
    /// Seconds; the only field that is not reproducible.
    pub wall_time: f64,
}

impl RunRecord {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.network == other.network
            && self.train == other.train
            && self.curve == other.curve
            && self.train_loss.iter().map(|v| v.to_bits()).eq(other.train_loss.iter().map(|v| v.to_bits()))
            && self.final_test_accuracy.to_bits() == other.final_test_accuracy.to_bits()
    }
}
