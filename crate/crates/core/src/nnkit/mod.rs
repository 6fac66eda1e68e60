//! Minimal deterministic neural-network kernel: dense ReLU classifier with
//! hand-written back-propagation, losses, plain SGD, parameter masks,
//! checkpoints and the Lambert W function.

mod checkpoint;
mod lambert;
mod loss;
mod matrix;
mod model;

pub use checkpoint::{decode, encode, read_checkpoint, write_checkpoint};
pub use lambert::{lambert_w, BRANCH_POINT};
pub use loss::{
    cross_entropy, kl_divergence, mean_squared_distance, softmax, softmax_rows, LossOutput,
    LOG_FLOOR,
};
pub use matrix::Matrix;
pub use model::{
    init_model, sgd_step, sgd_step_in_place, Activation, Dense, Direction, ForwardCache,
    GradBundle, Model, ParamMask,
};

use crate::error::Result;

/// Cross-entropy of `model` on a batch, with parameter gradients.
pub fn cross_entropy_grad(model: &Model, batch: &Matrix, labels: &[usize]) -> Result<GradBundle> {
    let cache = model.forward_cached(batch)?;
    let out = cross_entropy(&cache.logits, labels)?;
    Ok(model.backward(&cache, &out.grad, None)?.with_loss(out.loss))
}

/// `KL(model(batch) ‖ softmax(target_logits))`, with parameter gradients.
pub fn kl_grad(model: &Model, batch: &Matrix, target_logits: &Matrix) -> Result<GradBundle> {
    let cache = model.forward_cached(batch)?;
    let out = kl_divergence(&cache.logits, target_logits)?;
    Ok(model.backward(&cache, &out.grad, None)?.with_loss(out.loss))
}

/// Central-difference gradient of `loss` at `model`'s parameters.
///
/// Test oracle: evaluates the loss `2P` times and never touches the analytic
/// back-propagation path.
pub fn finite_difference_grad(
    model: &Model,
    step: f64,
    mut loss: impl FnMut(&Model) -> f64,
) -> Vec<f64> {
    let base = model.params_vec();
    let mut probe = model.clone();
    let mut theta = base.clone();
    (0..base.len())
        .map(|i| {
            theta[i] = base[i] + step;
            probe.set_params(&theta).unwrap();
            let up = loss(&probe);
            theta[i] = base[i] - step;
            probe.set_params(&theta).unwrap();
            let down = loss(&probe);
            theta[i] = base[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// True when `analytic` matches `numeric` to relative error `rel`, or to
/// absolute error `abs` for components near zero.
pub fn gradients_agree(analytic: &[f64], numeric: &[f64], rel: f64, abs: f64) -> bool {
    analytic.len() == numeric.len()
        && analytic.iter().zip(numeric).all(|(&a, &n)| {
            let diff = (a - n).abs();
            diff <= abs || diff <= rel * a.abs().max(n.abs())
        })
}
