//! Writes a trained model to disk, reads it back and checks that the
//! predictions are unchanged.
//!
//!     cargo run --release --example checkpoint_roundtrip

use speech_unlearn::nnkit::{encode, read_checkpoint, write_checkpoint};
use speech_unlearn::speechgen::{generate, split, GenSpec, Task};
use speech_unlearn::unlearn::{train, TrainSettings};

fn main() {
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let p = split(&corpus, Task::Keyword, 0.2, 0).unwrap();
    let model = train(&data, &p, &TrainSettings::default(), 0).unwrap();

    let path = std::env::temp_dir().join("speech-unlearn-example.ckpt");
    write_checkpoint(&model, &path).unwrap();
    let back = read_checkpoint(&path).unwrap();
    let (x, _) = data.batch(&p.test_ids);
    println!("{} bytes at {}", encode(&model).len(), path.display());
    println!("identical parameters: {}", back == model);
    println!("identical predictions: {}", back.predict(&x).unwrap() == model.predict(&x).unwrap());
}
