#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybridnet::activations::ActivationKind;
use hybridnet::harness::ExperimentConfig;
use hybridnet::nn::{self, LayerSpec, NetworkSpec, Params, Shape};

/// Windowed accuracy gradient straight from its definition, 1-based epochs.
pub fn brute_ag(acc: &[f64], e: usize, r: usize) -> f64 {
    let a = |i: usize| acc[i - 1];
    let mut ahead = 0.0;
    for i in e..=e + r - 1 {
        ahead += a(i);
    }
    let mut behind = 0.0;
    for j in e + 1 - r..=e {
        behind += a(j);
    }
    (ahead - behind) / (r as f64 * a(e))
}

/// First epoch whose gradient drops below `threshold`, scanning every legal epoch.
pub fn brute_ep(acc: &[f64], r: usize, threshold: f64) -> Option<usize> {
    let t = acc.len();
    if t + 1 < 2 * r {
        return None;
    }
    (r..=t + 1 - r).find(|&e| brute_ag(acc, e, r) < threshold)
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub const SELU_ALPHA: f64 = 1.67326324;
pub const SELU_LAMBDA: f64 = 1.050700987;

pub fn selu(x: f64) -> f64 {
    SELU_LAMBDA * if x > 0.0 { x } else { SELU_ALPHA * (x.exp() - 1.0) }
}

pub fn relu_d(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn elu_d(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn selu_d(x: f64) -> f64 {
    SELU_LAMBDA * if x > 0.0 { 1.0 } else { SELU_ALPHA * x.exp() }
}

pub struct GradReport {
    pub params: usize,
    pub max_rel_err: f64,
    pub worst: (usize, f64, f64),
    pub attempts: usize,
}

/// Relative error with a floor so coordinates whose true derivative is zero
/// compare on an absolute scale far below the tolerance.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Backprop vs. a five-point central difference on every parameter.
///
/// Inputs are redrawn until no pre-activation or pooling tie lies within
/// reach of the finite-difference stencil.
pub fn gradient_check(spec: &NetworkSpec, seed: u64, batch: usize, dropout_seed: u64) -> GradReport {
    const H: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::init(spec, seed).unwrap();
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    let classes = spec.classes();
    let in_size = spec.input_shape.size();
    let mut attempts = 0;
    let (xs, ys, cache) = loop {
        attempts += 1;
        assert!(attempts <= 5000, "no kink-free input found");
        let xs: Vec<f64> = (0..batch * in_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let (_, cache) = nn::forward_pass(spec, &params, &xs, batch, true, dropout_seed).unwrap();
        // Ten times the largest single-parameter step of the stencil.
        if cache.kink_margin() > 20.0 * H {
            break (xs, ys, cache);
        }
    };
    let grads = nn::backward_pass(spec, &params, &cache, &ys).unwrap();
    let analytic: Vec<f64> = grads.iter().copied().collect();
    let mut report = GradReport {
        params: params.len(),
        max_rel_err: 0.0,
        worst: (0, 0.0, 0.0),
        attempts,
    };
    for i in 0..params.len() {
        let orig = *params.coord_mut(i).unwrap();
        let mut at = |delta: f64| {
            *params.coord_mut(i).unwrap() = orig + delta;
            nn::loss(spec, &params, &xs, &ys, true, dropout_seed).unwrap()
        };
        let numeric = (8.0 * (at(H) - at(-H)) - (at(2.0 * H) - at(-2.0 * H))) / (12.0 * H);
        *params.coord_mut(i).unwrap() = orig;
        let err = rel_err(analytic[i], numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = (i, analytic[i], numeric);
        }
    }
    report
}

/// Small networks covering every layer kind with every activation, plus
/// mixed-activation variants.
pub fn gradient_zoo() -> Vec<(String, NetworkSpec)> {
    let acts = [ActivationKind::RELU, ActivationKind::ELU, ActivationKind::SELU];
    let mut zoo = Vec::new();
    for a in acts {
        zoo.push((
            format!("mlp/{a}"),
            NetworkSpec {
                input_shape: Shape::flat(6),
                layers: vec![LayerSpec::dense(8, a), LayerSpec::dense(5, a), LayerSpec::output(3)],
            },
        ));
        zoo.push((
            format!("conv-pool/{a}"),
            NetworkSpec {
                input_shape: Shape::new(1, 6, 6),
                layers: vec![
                    LayerSpec::conv(3, 3, 1, 1, a),
                    LayerSpec::max_pool(2, 2),
                    LayerSpec::flatten(),
                    LayerSpec::dense(6, a),
                    LayerSpec::output(3),
                ],
            },
        ));
        zoo.push((
            format!("strided-conv/{a}"),
            NetworkSpec {
                input_shape: Shape::new(2, 5, 5),
                layers: vec![
                    LayerSpec::conv(2, 3, 2, 1, a),
                    LayerSpec::conv(3, 2, 1, 0, a),
                    LayerSpec::flatten(),
                    LayerSpec::output(4),
                ],
            },
        ));
        zoo.push((
            format!("overlapping-pool/{a}"),
            NetworkSpec {
                input_shape: Shape::new(1, 7, 7),
                layers: vec![
                    LayerSpec::conv(2, 2, 1, 0, a),
                    LayerSpec::max_pool(3, 2),
                    LayerSpec::flatten(),
                    LayerSpec::output(2),
                ],
            },
        ));
        zoo.push((
            format!("deep/{a}"),
            NetworkSpec {
                input_shape: Shape::flat(4),
                layers: vec![
                    LayerSpec::dense(6, a),
                    LayerSpec::dense(6, a),
                    LayerSpec::dense(6, a),
                    LayerSpec::output(2),
                ],
            },
        ));
    }
    let (r, e, s) = (ActivationKind::RELU, ActivationKind::ELU, ActivationKind::SELU);
    zoo.push((
        "hybrid-conv".into(),
        NetworkSpec {
            input_shape: Shape::new(1, 6, 6),
            layers: vec![
                LayerSpec::conv(2, 3, 1, 0, s),
                LayerSpec::max_pool(2, 2),
                LayerSpec::flatten(),
                LayerSpec::dense(5, e),
                LayerSpec::dense(4, r),
                LayerSpec::output(3),
            ],
        },
    ));
    zoo.push((
        "hybrid-mlp".into(),
        NetworkSpec {
            input_shape: Shape::flat(5),
            layers: vec![LayerSpec::dense(7, r), LayerSpec::dense(6, s), LayerSpec::dense(4, e), LayerSpec::output(3)],
        },
    ));
    zoo
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os(hybridnet::harness::MNIST_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_available() -> bool {
    mnist_dir().join("train-images-idx3-ubyte").is_file()
}

/// Small synthetic task for fast end-to-end runs.
pub fn teacher_config(seed: u64, epochs: usize) -> ExperimentConfig {
    let text = format!(
        r#"
[network]
input_shape = [8, 1, 1]
layers = [
  {{ type = "dense", out_features = 12, activation = {{ kind = "relu" }} }},
  {{ type = "dense", out_features = 8, activation = {{ kind = "relu" }} }},
  {{ type = "softmax_output", classes = 3 }},
]
[data]
kind = "synthetic"
seed = 11
teacher = {{ input_dim = 8, classes = 3, train_count = 300, eval_count = 200, hidden = [6], activation = {{ kind = "elu" }} }}
[train]
epochs = {epochs}
batch_size = 16
lr0 = 0.05
momentum = 0.9
seed = {seed}
[search]
dropout_grid = [0.0, 0.05, 0.1]
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}
