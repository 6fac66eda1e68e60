//! Shared desk-scale fixture for the integration tests.
#![allow(dead_code)]

use speech_unlearn::nnkit::Model;
use speech_unlearn::speechgen::{generate, select_forget, split, Corpus, ForgetSpec, GenSpec, Partition, Task, TaskData};
use speech_unlearn::unlearn::{train, Method, TrainSettings, UnlearnConfig};

pub struct Desk {
    pub corpus: Corpus,
    pub data: TaskData,
    pub partition: Partition,
    pub original: Model,
}

pub fn small_spec() -> GenSpec {
    GenSpec {
        num_keywords: 6,
        num_speakers: 5,
        frames: 4,
        feature_dim: 12,
        samples_per_class: 30,
        noise_sigma: 0.5,
        ..GenSpec::default()
    }
}

pub fn small_train() -> TrainSettings {
    TrainSettings {
        hidden_dims: vec![16],
        lr: 0.1,
        epochs: 30,
        batch_size: 16,
    }
}

/// Small corpus, trained original and a 10% sample-mode forget set.
pub fn desk(seed: u64) -> Desk {
    desk_with(seed, ForgetSpec::Sample { ratio: 0.10, seed })
}

pub fn desk_with(seed: u64, forget: ForgetSpec) -> Desk {
    let corpus = generate(&small_spec()).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let base = split(&corpus, Task::Keyword, 0.2, seed).unwrap();
    let original = train(&data, &base, &small_train(), seed).unwrap();
    let partition = select_forget(&base, &forget, &data.labels).unwrap();
    Desk {
        corpus,
        data,
        partition,
        original,
    }
}

pub fn cfg(method: Method, seed: u64) -> UnlearnConfig {
    UnlearnConfig {
        method,
        seed,
        lr: 0.05,
        epochs: 6,
        batch_size: 16,
        retrain: small_train(),
        ..UnlearnConfig::default()
    }
}
