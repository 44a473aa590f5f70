use super::params::{Gradients, Params};
use super::NnError;

/// One SGD step with momentum and L2 weight decay, in place:
///
/// `v' = momentum * v + (g + weight_decay * w)`, `w' = w - lr * v'`.
pub fn sgd_step(
    params: &mut Params,
    velocity: &mut Params,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<(), NnError> {
    if !params.same_shape(velocity) || !params.same_shape(grads) {
        return Err(NnError::Shape("parameter, velocity and gradient shapes differ".into()));
    }
    for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads.iter()) {
        *v = momentum * *v + (g + weight_decay * *w);
        *w -= lr * *v;
    }
    params.version += 1;
    Ok(())
}
