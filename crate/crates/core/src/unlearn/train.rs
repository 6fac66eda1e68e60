use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EpochTrace, GradientUsage, TrainSettings, UnlearnResult};
use crate::error::{Error, Result};
use crate::nnkit::{cross_entropy, cross_entropy_grad, init_model, sgd_step_in_place, Direction, Model};
use crate::speechgen::{Partition, TaskData};

/// Salt separating the shuffling stream from the initialization stream.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4531;

/// Fraction of `ids` whose argmax prediction matches the label. NaN when
/// `ids` is empty.
pub fn accuracy(model: &Model, data: &TaskData, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(f64::NAN);
    }
    let (x, labels) = data.batch(ids);
    let predictions = model.predict(&x)?;
    let correct = predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / ids.len() as f64)
}

/// Mean cross-entropy over `ids` with their true labels. NaN when empty.
pub fn mean_loss(model: &Model, data: &TaskData, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(f64::NAN);
    }
    let (x, labels) = data.batch(ids);
    Ok(cross_entropy(&model.logits(&x)?, &labels)?.loss)
}

/// Per-sample cross-entropy over `ids`.
pub fn per_sample_losses(model: &Model, data: &TaskData, ids: &[usize]) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let (x, labels) = data.batch(ids);
    Ok(cross_entropy(&model.logits(&x)?, &labels)?.per_sample)
}

/// Minibatch SGD on cross-entropy over `train_ids`, keeping the checkpoint
/// with the best accuracy on `heldout_ids` (later epochs win ties). With an
/// empty held-out set the last epoch is kept.
fn fit(
    data: &TaskData,
    train_ids: &[usize],
    heldout_ids: &[usize],
    settings: &TrainSettings,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<Model> {
    settings.validate()?;
    if train_ids.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    let mut model = init_model(data.input_dim(), &settings.hidden_dims, data.num_classes, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SALT);
    let mut order = train_ids.to_vec();
    let mut best: Option<(f64, Model)> = None;
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let (x, labels) = data.batch(chunk);
            let grads = cross_entropy_grad(&model, &x, &labels)?;
            sgd_step_in_place(&mut model, &grads, settings.lr, None, Direction::Descend)?;
        }
        on_epoch(epoch, &model)?;
        if !heldout_ids.is_empty() {
            let acc = accuracy(&model, data, heldout_ids)?;
            if best.as_ref().is_none_or(|(b, _)| acc >= *b) {
                best = Some((acc, model.clone()));
            }
        }
    }
    Ok(best.map_or(model, |(_, m)| m))
}

/// Trains the original model f on the partition's training ids, selecting
/// the checkpoint by held-out (test) accuracy.
pub fn train(data: &TaskData, partition: &Partition, settings: &TrainSettings, seed: u64) -> Result<Model> {
    fit(data, &partition.train_ids, &partition.test_ids, settings, seed, |_, _| Ok(()))
}

/// Trains a fresh model on D_r only: the gold standard unlearning methods
/// approximate. Its wall time is the budget for the other methods.
pub fn retrain_oracle(
    data: &TaskData,
    partition: &Partition,
    settings: &TrainSettings,
    seed: u64,
) -> Result<UnlearnResult> {
    if partition.retain_ids.is_empty() {
        return Err(Error::EmptySet("retain set"));
    }
    let start = Instant::now();
    let mut trace = Vec::with_capacity(settings.epochs);
    let model = fit(
        data,
        &partition.retain_ids,
        &partition.test_ids,
        settings,
        seed,
        |epoch, m| {
            trace.push(EpochTrace {
                epoch,
                loss_forget: mean_loss(m, data, &partition.forget_ids)?,
                loss_retain: mean_loss(m, data, &partition.retain_ids)?,
                embedding_distance: None,
            });
            Ok(())
        },
    )?;
    Ok(UnlearnResult {
        model,
        epochs_run: trace.len(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        trace,
        usage: GradientUsage {
            forget_rows: 0,
            retain_rows: partition.retain_ids.len() * settings.epochs,
        },
        stopped_by_budget: false,
        warning: None,
    })
}
