//! Forgets 5% of the keyword training samples with every method and prints
//! one table row per method.
//!
//!     cargo run --release --example sample_unlearning [seed]

use speech_unlearn::bench::evaluate;
use speech_unlearn::speechgen::{generate, select_forget, split, ForgetSpec, GenSpec, Task};
use speech_unlearn::unlearn::{run_unlearn, train, Method, TrainSettings, UnlearnConfig};

fn main() {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let base = split(&corpus, Task::Keyword, 0.2, seed).unwrap();
    let original = train(&data, &base, &TrainSettings::default(), seed).unwrap();
    let p = select_forget(&base, &ForgetSpec::Sample { ratio: 0.05, seed }, &data.labels).unwrap();
    println!("|D_f| = {}, |D_r| = {}, |D_t| = {}", p.forget_ids.len(), p.retain_ids.len(), p.test_ids.len());

    println!("{:<11} {:>7} {:>7} {:>7} {:>7} {:>8}", "Method", "D_t", "D_f", "D_r", "MIA", "Time");
    let m = evaluate(&original, &data, &p).unwrap();
    println!("{:<11} {:>7.2} {:>7.2} {:>7.2} {:>7.2}", "Original", m.acc_test, m.acc_forget, m.acc_retain, m.mia);
    for method in Method::ALL {
        let cfg = UnlearnConfig {
            method,
            seed,
            ..UnlearnConfig::default()
        };
        let r = run_unlearn(&original, &data, &p, &cfg).unwrap();
        let m = evaluate(&r.model, &data, &p).unwrap();
        println!(
            "{:<11} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.3}s",
            method.display_name(),
            m.acc_test,
            m.acc_forget,
            m.acc_retain,
            m.mia,
            r.wall_time_seconds
        );
    }
}
