use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{Corpus, Task};
use crate::error::{Error, Result};

/// Upper bound on the sample-mode forget ratio.
pub const MAX_FORGET_RATIO: f64 = 0.10;

/// Index sets of one experiment. All id lists are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub task: Task,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// D_f
    pub forget_ids: Vec<usize>,
    /// D_r = train \ D_f
    pub retain_ids: Vec<usize>,
    /// Class removed in class mode.
    pub forget_class: Option<usize>,
}

/// How the forget set is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForgetSpec {
    /// A uniformly drawn fraction of the training set.
    Sample { ratio: f64, seed: u64 },
    /// Every training sample whose task label is `target_class`.
    Class { target_class: usize },
}

impl ForgetSpec {
    pub fn mode_name(&self) -> &'static str {
        match self {
            ForgetSpec::Sample { .. } => "sample",
            ForgetSpec::Class { .. } => "class",
        }
    }
}

/// Stratified train/test split: within each class a seeded shuffle sends
/// `round(test_fraction · n_class)` ids to test, clamped so that classes
/// with at least two members appear on both sides.
pub fn split(corpus: &Corpus, task: Task, test_fraction: f64, seed: u64) -> Result<Partition> {
    if corpus.is_empty() {
        return Err(Error::EmptySet("corpus"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(
            "test_fraction",
            format!("{test_fraction} is not in (0, 1)"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); corpus.num_classes(task)];
    for u in &corpus.utterances {
        by_class[u.label(task)].push(u.id);
    }
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for mut ids in by_class {
        let n = ids.len();
        if n == 0 {
            continue;
        }
        ids.shuffle(&mut rng);
        let mut n_test = (test_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        } else {
            n_test = 0;
        }
        test_ids.extend_from_slice(&ids[..n_test]);
        train_ids.extend_from_slice(&ids[n_test..]);
    }
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(Partition {
        task,
        retain_ids: train_ids.clone(),
        train_ids,
        test_ids,
        forget_ids: Vec::new(),
        forget_class: None,
    })
}

/// Chooses D_f from the training ids and sets `D_r = train \ D_f`.
///
/// `labels` holds the task label of every utterance, indexed by id.
pub fn select_forget(partition: &Partition, spec: &ForgetSpec, labels: &[usize]) -> Result<Partition> {
    if !partition.forget_ids.is_empty() {
        return Err(Error::invalid("partition", "forget set already selected"));
    }
    let mut forget_ids = match *spec {
        ForgetSpec::Sample { ratio, seed } => {
            if !(0.0..=MAX_FORGET_RATIO).contains(&ratio) {
                return Err(Error::invalid(
                    "ratio",
                    format!("{ratio} is outside [0, {MAX_FORGET_RATIO}]"),
                ));
            }
            let n = (ratio * partition.train_ids.len() as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            partition
                .train_ids
                .choose_multiple(&mut rng, n)
                .copied()
                .collect::<Vec<_>>()
        }
        ForgetSpec::Class { target_class } => {
            let ids: Vec<usize> = partition
                .train_ids
                .iter()
                .copied()
                .filter(|&id| labels[id] == target_class)
                .collect();
            if ids.is_empty() {
                return Err(Error::invalid(
                    "target_class",
                    format!("class {target_class} has no training samples"),
                ));
            }
            ids
        }
    };
    forget_ids.sort_unstable();
    let retain_ids = sorted_difference(&partition.train_ids, &forget_ids);
    Ok(Partition {
        forget_ids,
        retain_ids,
        forget_class: match *spec {
            ForgetSpec::Class { target_class } => Some(target_class),
            ForgetSpec::Sample { .. } => None,
        },
        ..partition.clone()
    })
}

/// `a \ b` for sorted inputs.
fn sorted_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len().saturating_sub(b.len()));
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j >= b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

impl Partition {
    /// Test ids whose label is the forgotten class (class mode only).
    pub fn forgotten_class_test_ids(&self, labels: &[usize]) -> Vec<usize> {
        match self.forget_class {
            Some(c) => self.test_ids.iter().copied().filter(|&id| labels[id] == c).collect(),
            None => Vec::new(),
        }
    }

    /// A copy with an empty forget set (D_r = train).
    pub fn without_forget(&self) -> Partition {
        Partition {
            forget_ids: Vec::new(),
            retain_ids: self.train_ids.clone(),
            forget_class: None,
            ..self.clone()
        }
    }

    /// Checks disjointness and coverage of the index sets.
    pub fn check_invariants(&self) -> Result<()> {
        let sorted_unique = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        for (name, ids) in [
            ("train_ids", &self.train_ids),
            ("test_ids", &self.test_ids),
            ("forget_ids", &self.forget_ids),
            ("retain_ids", &self.retain_ids),
        ] {
            if !sorted_unique(ids) {
                return Err(Error::invalid(name, "must be sorted and duplicate-free"));
            }
        }
        let overlap = |a: &[usize], b: &[usize]| a.iter().any(|x| b.binary_search(x).is_ok());
        if overlap(&self.train_ids, &self.test_ids) {
            return Err(Error::invalid("partition", "train and test overlap"));
        }
        if overlap(&self.forget_ids, &self.retain_ids) {
            return Err(Error::invalid("partition", "forget and retain overlap"));
        }
        let mut union = [self.forget_ids.as_slice(), self.retain_ids.as_slice()].concat();
        union.sort_unstable();
        if union != self.train_ids {
            return Err(Error::invalid("partition", "forget ∪ retain differs from train"));
        }
        Ok(())
    }
}
