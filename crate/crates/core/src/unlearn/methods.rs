use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EpochTrace, GradientUsage, Method, UnlearnConfig, UnlearnResult};
use super::superloss::SuperLoss;
use super::train::{mean_loss, retrain_oracle};
use crate::error::{Error, Result};
use crate::nnkit::{
    cross_entropy, init_model, kl_divergence, mean_squared_distance, sgd_step_in_place, Direction,
    GradBundle, LossOutput, Matrix, Model, ParamMask,
};
use crate::speechgen::{Partition, TaskData};

/// Salt for the incompetent teacher's initialization.
const TEACHER_SALT: u64 = 0x4241_445f_5445_4143;

/// Epoch-granular time budget. An epoch may start only if the elapsed time
/// plus the longest epoch seen so far fits in the budget; the first epoch
/// starts whenever any budget remains.
struct EpochClock {
    start: Instant,
    budget: f64,
    epoch_start: Option<Instant>,
    longest_epoch: f64,
    stopped: bool,
}

impl EpochClock {
    fn new(start: Instant, budget: f64) -> Self {
        Self {
            start,
            budget,
            epoch_start: None,
            longest_epoch: 0.0,
            stopped: false,
        }
    }

    fn try_begin_epoch(&mut self) -> bool {
        let elapsed = self.start.elapsed().as_secs_f64();
        if elapsed + self.longest_epoch > self.budget || elapsed >= self.budget {
            self.stopped = true;
            return false;
        }
        self.epoch_start = Some(Instant::now());
        true
    }

    fn end_epoch(&mut self) {
        if let Some(t) = self.epoch_start.take() {
            self.longest_epoch = self.longest_epoch.max(t.elapsed().as_secs_f64());
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Shared epoch bookkeeping for every method.
struct Run {
    model: Model,
    rng: ChaCha8Rng,
    clock: EpochClock,
    trace: Vec<EpochTrace>,
    usage: GradientUsage,
    superloss: Option<SuperLoss>,
}

impl Run {
    fn new(original: &Model, cfg: &UnlearnConfig, start: Instant) -> Result<Self> {
        Ok(Self {
            model: original.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            clock: EpochClock::new(start, cfg.time_budget_seconds),
            trace: Vec::with_capacity(cfg.epochs),
            usage: GradientUsage::default(),
            superloss: if cfg.superloss_enabled {
                Some(SuperLoss::new(cfg.sl_lambda, cfg.sl_ema)?)
            } else {
                None
            },
        })
    }

    /// Applies SuperLoss weights to a per-sample forgetting loss when enabled.
    fn weigh_forgetting(&mut self, loss: LossOutput) -> Result<LossOutput> {
        match &mut self.superloss {
            Some(sl) => {
                let weights = sl.weigh(&loss.per_sample)?;
                loss.reweighted(&weights)
            }
            None => Ok(loss),
        }
    }

    /// As [`Run::weigh_forgetting`] for a loss that is ascended: the
    /// forgetting loss being minimized is its negation, so weights are
    /// computed from `−l_i`.
    fn weigh_ascended(&mut self, loss: LossOutput) -> Result<LossOutput> {
        match &mut self.superloss {
            Some(sl) => {
                let negated: Vec<f64> = loss.per_sample.iter().map(|l| -l).collect();
                let weights = sl.weigh(&negated)?;
                loss.reweighted(&weights)
            }
            None => Ok(loss),
        }
    }

    fn finish(self) -> UnlearnResult {
        UnlearnResult {
            epochs_run: self.trace.len(),
            wall_time_seconds: self.clock.elapsed(),
            stopped_by_budget: self.clock.stopped,
            model: self.model,
            trace: self.trace,
            usage: self.usage,
            warning: None,
        }
    }
}

fn unchanged(original: &Model, start: Instant, warning: &str) -> UnlearnResult {
    UnlearnResult {
        model: original.clone(),
        epochs_run: 0,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        trace: Vec::new(),
        usage: GradientUsage::default(),
        stopped_by_budget: false,
        warning: Some(warning.to_string()),
    }
}

fn check_method(cfg: &UnlearnConfig, expected: Method) -> Result<()> {
    cfg.validate()?;
    if cfg.method != expected {
        return Err(Error::invalid(
            "method",
            format!("config selects {} but {} was called", cfg.method, expected),
        ));
    }
    Ok(())
}

/// One ascent epoch over D_f (shared by GradAscent and SCRUB's first phase).
fn ascent_epoch(run: &mut Run, data: &TaskData, forget_ids: &[usize], cfg: &UnlearnConfig) -> Result<()> {
    let mut order = forget_ids.to_vec();
    order.shuffle(&mut run.rng);
    for chunk in order.chunks(cfg.batch_size) {
        let (x, labels) = data.batch(chunk);
        let cache = run.model.forward_cached(&x)?;
        let loss = run.weigh_ascended(cross_entropy(&cache.logits, &labels)?)?;
        let grads = run.model.backward(&cache, &loss.grad, None)?;
        sgd_step_in_place(&mut run.model, &grads, cfg.lr, None, Direction::Ascend)?;
        run.usage.forget_rows += chunk.len();
    }
    Ok(())
}

fn ce_trace(run: &Run, data: &TaskData, partition: &Partition) -> Result<EpochTrace> {
    Ok(EpochTrace {
        epoch: run.trace.len() + 1,
        loss_forget: mean_loss(&run.model, data, &partition.forget_ids)?,
        loss_retain: mean_loss(&run.model, data, &partition.retain_ids)?,
        embedding_distance: None,
    })
}

/// Gradient ascent on the cross-entropy of D_f (λ = 0: D_r is never used
/// for gradients).
pub fn grad_ascent(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    check_method(cfg, Method::GradAscent)?;
    let start = Instant::now();
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, start, "empty forget set: nothing to unlearn"));
    }
    let mut run = Run::new(original, cfg, start)?;
    for _ in 0..cfg.epochs {
        if !run.clock.try_begin_epoch() {
            break;
        }
        ascent_epoch(&mut run, data, &partition.forget_ids, cfg)?;
        let t = ce_trace(&run, data, partition)?;
        run.trace.push(t);
        run.clock.end_epoch();
    }
    Ok(run.finish())
}

/// Draws, for each forget id in order, a label uniformly from the other
/// `num_classes − 1` classes.
pub fn corrupt_labels(
    true_labels: &[usize],
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::invalid(
            "num_classes",
            "random relabelling needs at least two classes",
        ));
    }
    Ok(true_labels
        .iter()
        .map(|&y| {
            let r = rng.gen_range(0..num_classes - 1);
            if r >= y {
                r + 1
            } else {
                r
            }
        })
        .collect())
}

/// Random-label fine-tuning over corrupted D_f and true-label D_r, with
/// every update restricted to `mask` when given.
fn rand_label_masked(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
    mask: Option<&ParamMask>,
    start: Instant,
) -> Result<UnlearnResult> {
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, start, "empty forget set: nothing to unlearn"));
    }
    let mut run = Run::new(original, cfg, start)?;
    let true_forget: Vec<usize> = partition.forget_ids.iter().map(|&i| data.labels[i]).collect();
    let corrupted = corrupt_labels(&true_forget, data.num_classes, &mut run.rng)?;

    // (id, training label, belongs to D_f)
    let mut joint: Vec<(usize, usize, bool)> = partition
        .forget_ids
        .iter()
        .zip(&corrupted)
        .map(|(&id, &y)| (id, y, true))
        .chain(partition.retain_ids.iter().map(|&id| (id, data.labels[id], false)))
        .collect();
    let corrupted_forget = TaskData {
        labels: {
            let mut labels = data.labels.clone();
            for (&id, &y) in partition.forget_ids.iter().zip(&corrupted) {
                labels[id] = y;
            }
            labels
        },
        ..data.clone()
    };

    for _ in 0..cfg.epochs {
        if !run.clock.try_begin_epoch() {
            break;
        }
        joint.shuffle(&mut run.rng);
        for chunk in joint.chunks(cfg.batch_size) {
            let ids: Vec<usize> = chunk.iter().map(|c| c.0).collect();
            let labels: Vec<usize> = chunk.iter().map(|c| c.1).collect();
            let x = data.features.gather_rows(&ids);
            let cache = run.model.forward_cached(&x)?;
            let mut loss = cross_entropy(&cache.logits, &labels)?;
            if let Some(sl) = &mut run.superloss {
                let forget_rows: Vec<usize> = (0..chunk.len()).filter(|&r| chunk[r].2).collect();
                let forget_losses: Vec<f64> = forget_rows.iter().map(|&r| loss.per_sample[r]).collect();
                let forget_weights = sl.weigh(&forget_losses)?;
                let mut weights = vec![1.0; chunk.len()];
                for (&r, &w) in forget_rows.iter().zip(&forget_weights) {
                    weights[r] = w;
                }
                loss = loss.reweighted(&weights)?;
            }
            let grads = run.model.backward(&cache, &loss.grad, None)?;
            sgd_step_in_place(&mut run.model, &grads, cfg.lr, mask, Direction::Descend)?;
            let n_forget = chunk.iter().filter(|c| c.2).count();
            run.usage.forget_rows += n_forget;
            run.usage.retain_rows += chunk.len() - n_forget;
        }
        let t = EpochTrace {
            epoch: run.trace.len() + 1,
            loss_forget: mean_loss(&run.model, &corrupted_forget, &partition.forget_ids)?,
            loss_retain: mean_loss(&run.model, data, &partition.retain_ids)?,
            embedding_distance: None,
        };
        run.trace.push(t);
        run.clock.end_epoch();
    }
    Ok(run.finish())
}

/// Fine-tunes on D_f with labels replaced by uniformly random wrong classes
/// (drawn once per run) together with true-label D_r (λ = 1).
pub fn rand_label(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    check_method(cfg, Method::RandLabel)?;
    rand_label_masked(original, data, partition, cfg, None, Instant::now())
}

/// Saliency mask: scores each parameter by `|∂(−L_task(D_f))/∂θ|` at
/// `model` over the whole forget set and selects the top `⌈γ·P⌉`, breaking
/// ties by ascending parameter index.
pub fn compute_saliency_mask(
    model: &Model,
    data: &TaskData,
    forget_ids: &[usize],
    gamma: f64,
) -> Result<ParamMask> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", format!("{gamma} is outside [0, 1]")));
    }
    if forget_ids.is_empty() {
        return Err(Error::EmptySet("forget set"));
    }
    let (x, labels) = data.batch(forget_ids);
    let cache = model.forward_cached(&x)?;
    let loss = cross_entropy(&cache.logits, &labels)?.scaled(-1.0);
    let scores: Vec<f64> = model
        .backward(&cache, &loss.grad, None)?
        .flat()
        .into_iter()
        .map(f64::abs)
        .collect();

    let p = scores.len();
    let raw = gamma * p as f64;
    // treat γ·P within rounding noise of an integer as that integer
    let k = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    } as usize;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut bits = vec![false; p];
    for &i in &order[..k.min(p)] {
        bits[i] = true;
    }
    Ok(ParamMask::from_bits(bits))
}

/// Random-label fine-tuning restricted to the parameters most salient for
/// forgetting D_f. The mask is computed once, at the original model.
pub fn salun(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    check_method(cfg, Method::SalUn)?;
    let start = Instant::now();
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, start, "empty forget set: nothing to unlearn"));
    }
    let mask = compute_saliency_mask(original, data, &partition.forget_ids, cfg.gamma)?;
    rand_label_masked(original, data, partition, cfg, Some(&mask), start)
}

/// Mean squared embedding distance between `student` and `teacher` on `ids`.
pub fn embedding_distance(student: &Model, teacher: &Model, data: &TaskData, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(f64::NAN);
    }
    let x = data.features.gather_rows(ids);
    let (_, a) = student.forward(&x)?;
    let (_, b) = teacher.forward(&x)?;
    Ok(mean_squared_distance(&a, &b)?.loss)
}

/// SCRUB: `⌈epochs/2⌉` epochs of gradient ascent on D_f, then the remaining
/// epochs descend `CE(D_r) + λ·‖emb_f'(x) − emb_f(x)‖²` on D_r with the
/// original model frozen.
pub fn scrub(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    check_method(cfg, Method::Scrub)?;
    let start = Instant::now();
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, start, "empty forget set: nothing to unlearn"));
    }
    if partition.retain_ids.is_empty() {
        return Err(Error::EmptySet("retain set"));
    }
    let lambda = Method::Scrub.retain_weight(cfg.lambda);
    let ascent_epochs = cfg.epochs.div_ceil(2);
    let mut run = Run::new(original, cfg, start)?;
    let frozen = FrozenRows::embeddings(data, &[(original, &partition.retain_ids)])?;
    for epoch in 0..cfg.epochs {
        if !run.clock.try_begin_epoch() {
            break;
        }
        if epoch < ascent_epochs {
            ascent_epoch(&mut run, data, &partition.forget_ids, cfg)?;
            let t = ce_trace(&run, data, partition)?;
            run.trace.push(t);
        } else {
            let mut order = partition.retain_ids.clone();
            order.shuffle(&mut run.rng);
            for chunk in order.chunks(cfg.batch_size) {
                let (x, labels) = data.batch(chunk);
                let cache = run.model.forward_cached(&x)?;
                let ce = cross_entropy(&cache.logits, &labels)?;
                let pull = mean_squared_distance(cache.embeddings(), &frozen.gather(chunk))?.scaled(lambda);
                let grads = run.model.backward(&cache, &ce.grad, Some(&pull.grad))?;
                sgd_step_in_place(&mut run.model, &grads, cfg.lr, None, Direction::Descend)?;
                run.usage.retain_rows += chunk.len();
            }
            let (_, emb) = run.model.forward(&data.features.gather_rows(&partition.retain_ids))?;
            let dist = mean_squared_distance(&emb, &frozen.gather(&partition.retain_ids))?.loss;
            let mut t = ce_trace(&run, data, partition)?;
            t.loss_retain += lambda * dist;
            t.embedding_distance = Some(dist);
            run.trace.push(t);
        }
        run.clock.end_epoch();
    }
    Ok(run.finish())
}

/// The incompetent teacher f_d: a freshly initialized model with the same
/// architecture as `original`.
pub fn incompetent_teacher(original: &Model, seed: u64) -> Result<Model> {
    init_model(
        original.input_dim(),
        &original.hidden_dims(),
        original.num_classes(),
        seed ^ TEACHER_SALT,
    )
}

/// Bad-T objective terms `(KL(f'(D_f) ‖ f_d(D_f)), KL(f'(D_r) ‖ f(D_r)))`
/// on the full subsets.
pub fn bad_t_terms(
    student: &Model,
    original: &Model,
    teacher: &Model,
    data: &TaskData,
    partition: &Partition,
) -> Result<(f64, f64)> {
    let term = |ids: &[usize], target: &Model| -> Result<f64> {
        if ids.is_empty() {
            return Ok(f64::NAN);
        }
        let x = data.features.gather_rows(ids);
        Ok(kl_divergence(&student.logits(&x)?, &target.logits(&x)?)?.loss)
    };
    Ok((
        term(&partition.forget_ids, teacher)?,
        term(&partition.retain_ids, original)?,
    ))
}

/// Frozen model outputs cached once per run, keyed by data row.
struct FrozenRows {
    rows: Matrix,
}

impl FrozenRows {
    /// Logits of each model on its id set.
    fn new(data: &TaskData, sources: &[(&Model, &[usize])]) -> Result<Self> {
        Self::build(data, sources, |m, x| m.logits(x))
    }

    /// Embeddings of each model on its id set.
    fn embeddings(data: &TaskData, sources: &[(&Model, &[usize])]) -> Result<Self> {
        Self::build(data, sources, |m, x| Ok(m.forward(x)?.1))
    }

    fn build(
        data: &TaskData,
        sources: &[(&Model, &[usize])],
        f: impl Fn(&Model, &Matrix) -> Result<Matrix>,
    ) -> Result<Self> {
        let mut rows: Option<Matrix> = None;
        for &(model, ids) in sources {
            if ids.is_empty() {
                continue;
            }
            let out = f(model, &data.features.gather_rows(ids))?;
            let all = rows.get_or_insert_with(|| Matrix::zeros(data.features.rows(), out.cols()));
            for (k, &id) in ids.iter().enumerate() {
                all.row_mut(id).copy_from_slice(out.row(k));
            }
        }
        Ok(Self {
            rows: rows.unwrap_or_else(|| Matrix::zeros(0, 0)),
        })
    }

    fn gather(&self, ids: &[usize]) -> Matrix {
        self.rows.gather_rows(ids)
    }

    /// Mean `KL(student ‖ cached)` over `ids`.
    fn kl_from(&self, student: &Model, data: &TaskData, ids: &[usize]) -> Result<f64> {
        if ids.is_empty() {
            return Ok(f64::NAN);
        }
        let logits = student.logits(&data.features.gather_rows(ids))?;
        Ok(kl_divergence(&logits, &self.gather(ids))?.loss)
    }
}

/// Bad teaching: descends `KL(f'(D_f) ‖ f_d(D_f)) + KL(f'(D_r) ‖ f(D_r))`
/// over joint minibatches, each term averaged over its own rows.
pub fn bad_t(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    check_method(cfg, Method::BadT)?;
    let start = Instant::now();
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, start, "empty forget set: nothing to unlearn"));
    }
    if partition.retain_ids.is_empty() {
        return Err(Error::EmptySet("retain set"));
    }
    let teacher = incompetent_teacher(original, cfg.seed)?;
    let mut run = Run::new(original, cfg, start)?;
    // Both targets are frozen: f_d's logits on D_f, f's logits on D_r.
    let targets = FrozenRows::new(data, &[(&teacher, &partition.forget_ids), (original, &partition.retain_ids)])?;
    let mut joint: Vec<(usize, bool)> = partition
        .forget_ids
        .iter()
        .map(|&id| (id, true))
        .chain(partition.retain_ids.iter().map(|&id| (id, false)))
        .collect();

    for _ in 0..cfg.epochs {
        if !run.clock.try_begin_epoch() {
            break;
        }
        joint.shuffle(&mut run.rng);
        for chunk in joint.chunks(cfg.batch_size) {
            let forget: Vec<usize> = chunk.iter().filter(|c| c.1).map(|c| c.0).collect();
            let retain: Vec<usize> = chunk.iter().filter(|c| !c.1).map(|c| c.0).collect();
            let mut grads = GradBundle::zeros_like(&run.model);
            if !forget.is_empty() {
                let x = data.features.gather_rows(&forget);
                let cache = run.model.forward_cached(&x)?;
                let kl = kl_divergence(&cache.logits, &targets.gather(&forget))?;
                let kl = run.weigh_forgetting(kl)?;
                grads.add_scaled(&run.model.backward(&cache, &kl.grad, None)?, 1.0);
            }
            if !retain.is_empty() {
                let x = data.features.gather_rows(&retain);
                let cache = run.model.forward_cached(&x)?;
                let kl = kl_divergence(&cache.logits, &targets.gather(&retain))?;
                grads.add_scaled(&run.model.backward(&cache, &kl.grad, None)?, 1.0);
            }
            sgd_step_in_place(&mut run.model, &grads, cfg.lr, None, Direction::Descend)?;
            run.usage.forget_rows += forget.len();
            run.usage.retain_rows += retain.len();
        }
        let loss_forget = targets.kl_from(&run.model, data, &partition.forget_ids)?;
        let loss_retain = targets.kl_from(&run.model, data, &partition.retain_ids)?;
        run.trace.push(EpochTrace {
            epoch: run.trace.len() + 1,
            loss_forget,
            loss_retain,
            embedding_distance: None,
        });
        run.clock.end_epoch();
    }
    Ok(run.finish())
}

/// Single entry point: dispatches on `cfg.method`. An empty forget set is a
/// no-op for every method, retraining included.
pub fn run_unlearn(
    original: &Model,
    data: &TaskData,
    partition: &Partition,
    cfg: &UnlearnConfig,
) -> Result<UnlearnResult> {
    cfg.validate()?;
    if partition.forget_ids.is_empty() {
        return Ok(unchanged(original, Instant::now(), "empty forget set: nothing to unlearn"));
    }
    match cfg.method {
        Method::GradAscent => grad_ascent(original, data, partition, cfg),
        Method::RandLabel => rand_label(original, data, partition, cfg),
        Method::SalUn => salun(original, data, partition, cfg),
        Method::Scrub => scrub(original, data, partition, cfg),
        Method::BadT => bad_t(original, data, partition, cfg),
        Method::Retrain => retrain_oracle(data, partition, &cfg.retrain, cfg.seed),
    }
}
