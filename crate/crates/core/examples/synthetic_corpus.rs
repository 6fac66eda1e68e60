//! Generates the default corpus, splits it and trains keyword and speaker
//! classifiers.
//!
//!     cargo run --release --example synthetic_corpus

use speech_unlearn::speechgen::{generate, split, GenSpec, Task};
use speech_unlearn::unlearn::{accuracy, train, TrainSettings};

fn main() {
    let spec = GenSpec::default();
    let corpus = generate(&spec).unwrap();
    println!(
        "{} utterances: {} keywords x {} speakers, {} frames of {} features",
        corpus.len(),
        spec.num_keywords,
        spec.num_speakers,
        spec.frames,
        spec.feature_dim
    );
    for task in Task::ALL {
        let data = corpus.task_data(task).unwrap();
        let p = split(&corpus, task, 0.2, 0).unwrap();
        let model = train(&data, &p, &TrainSettings::default(), 0).unwrap();
        println!(
            "{task:<8} {} classes, input {}: train {:.1}%  test {:.1}%",
            corpus.num_classes(task),
            data.input_dim(),
            100.0 * accuracy(&model, &data, &p.train_ids).unwrap(),
            100.0 * accuracy(&model, &data, &p.test_ids).unwrap()
        );
    }
}
