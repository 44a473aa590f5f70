//! Batched forward and backward passes.
//!
//! Activations are stored sample-major as `(batch, channels, height, width)`.
//! Every reduction runs in a fixed order, so results are bit-reproducible.

use super::params::{Gradients, LayerParams, Params};
use super::spec::{LayerKind, NetworkSpec, Shape};
use super::NnError;
use crate::regularization::{alpha_prime, DropoutMask};
use crate::rng;

/// `c = a * b + beta * c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let extent = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= extent(m, k, a_strides));
    assert!(b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
        mask: Option<DropoutMask>,
    },
    Conv {
        cols: Vec<f64>,
        pre: Vec<f64>,
        mask: Option<DropoutMask>,
    },
    Pool {
        argmax: Vec<usize>,
        input_len: usize,
        min_gap: f64,
    },
    Flatten,
    Output {
        input: Vec<f64>,
    },
}

/// Intermediates recorded by [`forward_pass`] for [`backward_pass`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    layers: Vec<LayerCache>,
    logits: Vec<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Smallest distance of any pre-activation from the origin, and smallest gap
    /// between the top two entries of any pooling window. Finite differences
    /// with a step below this margin do not cross a kink.
    pub fn kink_margin(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| match l {
                LayerCache::Dense { pre, .. } | LayerCache::Conv { pre, .. } => {
                    pre.iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
                }
                LayerCache::Pool { min_gap, .. } => *min_gap,
                _ => f64::INFINITY,
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn conv_dims(input: Shape, kernel: usize, stride: usize, padding: usize) -> (usize, usize) {
    (
        (input.height + 2 * padding - kernel) / stride + 1,
        (input.width + 2 * padding - kernel) / stride + 1,
    )
}

fn im2col(x: &[f64], input: Shape, kernel: usize, stride: usize, padding: usize, cols: &mut [f64]) {
    let (oh, ow) = conv_dims(input, kernel, stride, padding);
    let spatial = oh * ow;
    for c in 0..input.channels {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let dst = &mut cols[row * spatial..(row + 1) * spatial];
                for i in 0..oh {
                    let y = (i * stride + ki) as isize - padding as isize;
                    for j in 0..ow {
                        let xcoord = (j * stride + kj) as isize - padding as isize;
                        dst[i * ow + j] = if y >= 0 && (y as usize) < input.height && xcoord >= 0 && (xcoord as usize) < input.width {
                            x[(c * input.height + y as usize) * input.width + xcoord as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], input: Shape, kernel: usize, stride: usize, padding: usize, dx: &mut [f64]) {
    let (oh, ow) = conv_dims(input, kernel, stride, padding);
    let spatial = oh * ow;
    for c in 0..input.channels {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let src = &cols[row * spatial..(row + 1) * spatial];
                for i in 0..oh {
                    let y = (i * stride + ki) as isize - padding as isize;
                    if y < 0 || y as usize >= input.height {
                        continue;
                    }
                    for j in 0..ow {
                        let xcoord = (j * stride + kj) as isize - padding as isize;
                        if xcoord >= 0 && (xcoord as usize) < input.width {
                            dx[(c * input.height + y as usize) * input.width + xcoord as usize] += src[i * ow + j];
                        }
                    }
                }
            }
        }
    }
}

/// `y = x w^T + b` for a batch of flat rows.
fn affine(x: &[f64], batch: usize, fan_in: usize, p: &LayerParams) -> Vec<f64> {
    let fan_out = p.bias.len();
    let mut y = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        y.extend_from_slice(&p.bias);
    }
    gemm(batch, fan_in, fan_out, x, (fan_in, 1), &p.weight, (1, fan_in), 1.0, &mut y);
    y
}

/// Runs the network on `batch` samples laid out contiguously in `inputs`.
///
/// In training mode each dropout layer draws its mask from a stream keyed by
/// `(dropout_seed, layer index)`; at inference dropout is the identity.
pub fn forward_pass(
    spec: &NetworkSpec,
    params: &Params,
    inputs: &[f64],
    batch: usize,
    training: bool,
    dropout_seed: u64,
) -> Result<(Vec<f64>, ForwardCache), NnError> {
    let shapes = spec.shapes()?;
    if params.layers.len() != spec.layers.len() {
        return Err(NnError::Shape(format!(
            "params have {} layers, network has {}",
            params.layers.len(),
            spec.layers.len()
        )));
    }
    if batch == 0 || inputs.len() != batch * spec.input_shape.size() {
        return Err(NnError::Shape(format!(
            "input buffer of {} values does not hold {batch} samples of shape {}",
            inputs.len(),
            spec.input_shape
        )));
    }
    let mut x = inputs.to_vec();
    let mut shape = spec.input_shape;
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = &params.layers[i];
        let out_shape = shapes[i];
        let cache = match layer.kind {
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } => {
                let (pre, cols) = match layer.kind {
                    LayerKind::Dense { out_features } => {
                        check_params(i, p, out_features * shape.size(), out_features)?;
                        (affine(&x, batch, shape.size(), p), None)
                    }
                    LayerKind::Conv2d {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    } => {
                        let rows = shape.channels * kernel * kernel;
                        check_params(i, p, out_channels * rows, out_channels)?;
                        let spatial = out_shape.height * out_shape.width;
                        let mut cols = vec![0.0; batch * rows * spatial];
                        let mut pre = vec![0.0; batch * out_channels * spatial];
                        for s in 0..batch {
                            let col_s = &mut cols[s * rows * spatial..(s + 1) * rows * spatial];
                            im2col(&x[s * shape.size()..(s + 1) * shape.size()], shape, kernel, stride, padding, col_s);
                            let out_s = &mut pre[s * out_channels * spatial..(s + 1) * out_channels * spatial];
                            for (o, chunk) in out_s.chunks_mut(spatial).enumerate() {
                                chunk.fill(p.bias[o]);
                            }
                            gemm(out_channels, rows, spatial, &p.weight, (rows, 1), col_s, (spatial, 1), 1.0, out_s);
                        }
                        (pre, Some(cols))
                    }
                    _ => unreachable!(),
                };
                let act = layer.activation.expect("validated");
                let mut y: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
                let mask = match (&layer.dropout, training) {
                    (Some(d), true) if !d.is_identity() => {
                        let mut stream = rng::stream(dropout_seed, &[rng::tag::DROPOUT, i as u64]);
                        let m = DropoutMask::sample(d, y.len(), alpha_prime(&act), &mut stream);
                        m.apply(&mut y);
                        Some(m)
                    }
                    _ => None,
                };
                let input = std::mem::replace(&mut x, y);
                match cols {
                    Some(cols) => LayerCache::Conv { cols, pre, mask },
                    None => LayerCache::Dense { input, pre, mask },
                }
            }
            LayerKind::MaxPool { kernel, stride } => {
                let (y, argmax, min_gap) = max_pool(&x, batch, shape, out_shape, kernel, stride);
                let input_len = x.len();
                x = y;
                LayerCache::Pool {
                    argmax,
                    input_len,
                    min_gap,
                }
            }
            LayerKind::Flatten => LayerCache::Flatten,
            LayerKind::SoftmaxOutput { classes } => {
                check_params(i, p, classes * shape.size(), classes)?;
                let logits = affine(&x, batch, shape.size(), p);
                let input = std::mem::replace(&mut x, logits);
                LayerCache::Output { input }
            }
        };
        caches.push(cache);
        shape = out_shape;
    }
    let cache = ForwardCache {
        version: params.version,
        batch,
        layers: caches,
        logits: x.clone(),
    };
    Ok((x, cache))
}

fn check_params(layer: usize, p: &LayerParams, weights: usize, biases: usize) -> Result<(), NnError> {
    if p.weight.len() != weights || p.bias.len() != biases {
        return Err(NnError::Shape(format!(
            "layer {layer}: expected {weights} weights and {biases} biases, got {} and {}",
            p.weight.len(),
            p.bias.len()
        )));
    }
    Ok(())
}

fn max_pool(x: &[f64], batch: usize, input: Shape, out: Shape, kernel: usize, stride: usize) -> (Vec<f64>, Vec<usize>, f64) {
    let mut y = Vec::with_capacity(batch * out.size());
    let mut argmax = Vec::with_capacity(batch * out.size());
    let mut min_gap = f64::INFINITY;
    for s in 0..batch {
        for c in 0..input.channels {
            let base = (s * input.channels + c) * input.height * input.width;
            for i in 0..out.height {
                for j in 0..out.width {
                    let mut best = f64::NEG_INFINITY;
                    let mut second = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ki in 0..kernel {
                        for kj in 0..kernel {
                            let idx = base + (i * stride + ki) * input.width + j * stride + kj;
                            let v = x[idx];
                            if v > best {
                                second = best;
                                best = v;
                                best_idx = idx;
                            } else if v > second {
                                second = v;
                            }
                        }
                    }
                    // Tied zeros are dead or dropped units and stay zero under perturbation.
                    if kernel > 1 && !(best == 0.0 && second == 0.0) {
                        min_gap = min_gap.min(best - second);
                    }
                    y.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    (y, argmax, min_gap)
}

/// Mean softmax cross-entropy over the batch, and the softmax probabilities.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (s, (row, out)) in logits.chunks(classes).zip(probs.chunks_mut(classes)).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &z) in out.iter_mut().zip(row) {
            *o = (z - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        total += -(row[labels[s]] - max - sum.ln());
    }
    (total / labels.len() as f64, probs)
}

/// Gradient of the mean cross-entropy loss with respect to every parameter.
///
/// Dropout masks recorded in `cache` are reused exactly.
pub fn backward_pass(spec: &NetworkSpec, params: &Params, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients, NnError> {
    if cache.version != params.version || cache.layers.len() != spec.layers.len() {
        return Err(NnError::StaleCache);
    }
    if labels.len() != cache.batch {
        return Err(NnError::Shape(format!("{} labels for a batch of {}", labels.len(), cache.batch)));
    }
    let classes = spec.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::Shape(format!("label {bad} outside [0, {classes})")));
    }
    let shapes = spec.shapes()?;
    let batch = cache.batch;
    let (_, probs) = softmax_cross_entropy(&cache.logits, labels, classes);
    let mut grad = probs;
    for (s, &l) in labels.iter().enumerate() {
        grad[s * classes + l] -= 1.0;
    }
    let inv = 1.0 / batch as f64;
    grad.iter_mut().for_each(|g| *g *= inv);

    let mut grads = Params::zeros_like(params);
    for i in (0..spec.layers.len()).rev() {
        let in_shape = if i == 0 { spec.input_shape } else { shapes[i - 1] };
        let need_input_grad = i > 0;
        let p = &params.layers[i];
        let g = &mut grads.layers[i];
        match (&spec.layers[i].kind, &cache.layers[i]) {
            (LayerKind::SoftmaxOutput { .. }, LayerCache::Output { input }) => {
                grad = dense_backward(&grad, input, batch, in_shape.size(), p, g, need_input_grad);
            }
            (LayerKind::Dense { .. }, LayerCache::Dense { input, pre, mask }) => {
                let act = spec.layers[i].activation.expect("validated");
                if let Some(m) = mask {
                    m.backprop(&mut grad);
                }
                grad.iter_mut().zip(pre).for_each(|(g, &z)| *g *= act.slope(z));
                grad = dense_backward(&grad, input, batch, in_shape.size(), p, g, need_input_grad);
            }
            (
                &LayerKind::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                LayerCache::Conv { cols, pre, mask },
            ) => {
                let act = spec.layers[i].activation.expect("validated");
                if let Some(m) = mask {
                    m.backprop(&mut grad);
                }
                grad.iter_mut().zip(pre).for_each(|(g, &z)| *g *= act.slope(z));
                let rows = in_shape.channels * kernel * kernel;
                let spatial = shapes[i].height * shapes[i].width;
                let mut dx = if need_input_grad { vec![0.0; batch * in_shape.size()] } else { Vec::new() };
                let mut dcols = vec![0.0; rows * spatial];
                for s in 0..batch {
                    let dz = &grad[s * out_channels * spatial..(s + 1) * out_channels * spatial];
                    let col_s = &cols[s * rows * spatial..(s + 1) * rows * spatial];
                    gemm(out_channels, spatial, rows, dz, (spatial, 1), col_s, (1, spatial), 1.0, &mut g.weight);
                    for (o, chunk) in dz.chunks(spatial).enumerate() {
                        g.bias[o] += chunk.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        gemm(rows, out_channels, spatial, &p.weight, (1, rows), dz, (spatial, 1), 0.0, &mut dcols);
                        let dx_s = &mut dx[s * in_shape.size()..(s + 1) * in_shape.size()];
                        col2im(&dcols, in_shape, kernel, stride, padding, dx_s);
                    }
                }
                grad = dx;
            }
            (LayerKind::MaxPool { .. }, LayerCache::Pool { argmax, input_len, .. }) => {
                let mut dx = vec![0.0; *input_len];
                for (&idx, &gv) in argmax.iter().zip(&grad) {
                    dx[idx] += gv;
                }
                grad = dx;
            }
            (LayerKind::Flatten, LayerCache::Flatten) => {}
            _ => return Err(NnError::StaleCache),
        }
    }
    Ok(grads)
}

fn dense_backward(
    dz: &[f64],
    input: &[f64],
    batch: usize,
    fan_in: usize,
    p: &LayerParams,
    g: &mut LayerParams,
    need_input_grad: bool,
) -> Vec<f64> {
    let fan_out = p.bias.len();
    gemm(fan_out, batch, fan_in, dz, (1, fan_out), input, (fan_in, 1), 0.0, &mut g.weight);
    for row in dz.chunks(fan_out) {
        for (b, &d) in g.bias.iter_mut().zip(row) {
            *b += d;
        }
    }
    if !need_input_grad {
        return Vec::new();
    }
    let mut dx = vec![0.0; batch * fan_in];
    gemm(batch, fan_out, fan_in, dz, (fan_out, 1), &p.weight, (fan_in, 1), 0.0, &mut dx);
    dx
}

/// Mean cross-entropy of a forward pass; convenience for checks and monitoring.
pub fn loss(
    spec: &NetworkSpec,
    params: &Params,
    inputs: &[f64],
    labels: &[usize],
    training: bool,
    dropout_seed: u64,
) -> Result<f64, NnError> {
    let (logits, _) = forward_pass(spec, params, inputs, labels.len(), training, dropout_seed)?;
    Ok(softmax_cross_entropy(&logits, labels, spec.classes()).0)
}
