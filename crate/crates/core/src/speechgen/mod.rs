//! Deterministic synthetic corpus of speech-like utterances carrying both a
//! keyword and a speaker label, with stratified splitting and forget-set
//! selection.

mod corpus;
mod partition;

pub use corpus::{featurize, generate, Corpus, GenSpec, TaskData, Task, Utterance};
pub use partition::{select_forget, split, ForgetSpec, Partition, MAX_FORGET_RATIO};

#[cfg(test)]
mod tests {
    use super::*;

    /// Nearest-centroid classifier over pooled features: accuracy on the
    /// test ids using centroids of the train ids.
    fn nearest_centroid_accuracy(data: &TaskData, p: &Partition) -> f64 {
        let d = data.input_dim();
        let mut sums = vec![vec![0.0; d]; data.num_classes];
        let mut counts = vec![0usize; data.num_classes];
        for &id in &p.train_ids {
            let c = data.labels[id];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(data.features.row(id)) {
                *s += x;
            }
        }
        let centroids: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        let correct = p
            .test_ids
            .iter()
            .filter(|&&id| {
                let x = data.features.row(id);
                let dist = |c: &Vec<f64>| -> f64 { c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum() };
                let best = (0..centroids.len())
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best == data.labels[id]
            })
            .count();
        correct as f64 / p.test_ids.len() as f64
    }

    #[test]
    fn low_noise_keywords_are_centroid_separable() {
        let spec = GenSpec {
            num_keywords: 12,
            num_speakers: 10,
            noise_sigma: 0.1,
            keyword_scale: 1.0,
            speaker_scale: 0.1,
            ..GenSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let data = corpus.task_data(Task::Keyword).unwrap();
        let p = split(&corpus, Task::Keyword, 0.2, 0).unwrap();
        let acc = nearest_centroid_accuracy(&data, &p);
        assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
    }
}
