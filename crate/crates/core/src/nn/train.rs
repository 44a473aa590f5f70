use std::time::Instant;

use super::network::{backward_pass, forward_pass, softmax_cross_entropy};
use super::optim::sgd_step;
use super::params::Params;
use super::spec::{NetworkSpec, RunRecord, TrainConfig};
use super::NnError;
use crate::curve::LearningCurve;
use crate::data::{batches, Dataset, Split};
use crate::rng;

const EVAL_BATCH: usize = 500;

/// Percentage of `split` classified correctly, with dropout disabled.
pub fn evaluate(spec: &NetworkSpec, params: &Params, data: &Dataset, split: Split) -> Result<f64, NnError> {
    let indices = data.split(split)?;
    if indices.is_empty() {
        return Err(NnError::Config(format!("{split} split is empty")));
    }
    let classes = spec.classes();
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (xs, ys) = data.gather(chunk);
        let (logits, _) = forward_pass(spec, params, &xs, chunk.len(), false, 0)?;
        for (row, &y) in logits.chunks(classes).zip(&ys) {
            if argmax(row) == y {
                correct += 1;
            }
        }
    }
    Ok(100.0 * correct as f64 / indices.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains `spec` from a fresh initialization for exactly `cfg.epochs` epochs,
/// recording evaluation accuracy after each one.
pub fn train(spec: &NetworkSpec, data: &Dataset, cfg: &TrainConfig) -> Result<RunRecord, NnError> {
    train_with(spec, data, cfg, |_, _| {})
}

/// [`train`] with a per-epoch callback receiving `(epoch, accuracy)`.
pub fn train_with<F: FnMut(usize, f64)>(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<RunRecord, NnError> {
    let start = Instant::now();
    cfg.validate()?;
    spec.validate()?;
    if data.shape() != spec.input_shape {
        return Err(NnError::Config(format!(
            "dataset shape {} does not match network input {}",
            data.shape(),
            spec.input_shape
        )));
    }
    if data.classes() > spec.classes() {
        return Err(NnError::Config(format!(
            "dataset has {} classes, network outputs {}",
            data.classes(),
            spec.classes()
        )));
    }
    if data.split(Split::Train)?.is_empty() {
        return Err(NnError::Config("training split is empty".into()));
    }
    if data.split(cfg.eval_split)?.is_empty() {
        return Err(NnError::Config(format!("{} split is empty", cfg.eval_split)));
    }

    let classes = spec.classes();
    let mut params = Params::init(spec, cfg.seed)?;
    let mut velocity = Params::zeros_like(&params);
    let mut accuracy = Vec::with_capacity(cfg.epochs);
    let mut train_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = batches(data, Split::Train, cfg.batch_size, rng::derive_seed(cfg.seed, &[epoch as u64]))?;
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, batch) in order.iter().enumerate() {
            let (xs, ys) = data.gather(batch);
            let dropout_seed = rng::derive_seed(cfg.seed, &[epoch as u64, b as u64]);
            let (logits, cache) = forward_pass(spec, &params, &xs, batch.len(), true, dropout_seed)?;
            let (loss, _) = softmax_cross_entropy(&logits, &ys, classes);
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            let grads = backward_pass(spec, &params, &cache, &ys)?;
            sgd_step(&mut params, &mut velocity, &grads, lr, cfg.momentum, cfg.weight_decay)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(NnError::Diverged { epoch });
        }
        let acc = evaluate(spec, &params, data, cfg.eval_split)?;
        log::debug!("epoch {epoch}: loss {:.5} acc {acc:.3}", loss_sum / seen as f64);
        on_epoch(epoch, acc);
        accuracy.push(acc);
        train_loss.push(loss_sum / seen as f64);
    }
    let curve = LearningCurve::new(accuracy).expect("accuracies in [0, 100], at least one epoch");
    Ok(RunRecord {
        network: spec.clone(),
        train: cfg.clone(),
        final_test_accuracy: curve.last(),
        curve,
        train_loss,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
