//! Removes one speaker entirely and reports accuracy on that speaker's
//! held-out test utterances next to the usual subsets.
//!
//!     cargo run --release --example class_unlearning [class]

use speech_unlearn::bench::evaluate;
use speech_unlearn::speechgen::{generate, select_forget, split, ForgetSpec, GenSpec, Task};
use speech_unlearn::unlearn::{run_unlearn, train, Method, TrainSettings, UnlearnConfig};

fn main() {
    let target_class = std::env::args().nth(1).map_or(3, |s| s.parse().expect("class must be an integer"));
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(Task::Speaker).unwrap();
    let base = split(&corpus, Task::Speaker, 0.2, 0).unwrap();
    let original = train(&data, &base, &TrainSettings::default(), 0).unwrap();
    let p = select_forget(&base, &ForgetSpec::Class { target_class }, &data.labels).unwrap();

    println!("forgetting speaker {target_class}: {} training utterances", p.forget_ids.len());
    println!("{:<11} {:>7} {:>7} {:>7} {:>10}", "Method", "D_t", "D_f", "D_r", "D_f(test)");
    let show = |name: &str, m: speech_unlearn::bench::CellMetrics| {
        println!(
            "{name:<11} {:>7.2} {:>7.2} {:>7.2} {:>10.2}",
            m.acc_test,
            m.acc_forget,
            m.acc_retain,
            m.acc_forget_test.unwrap_or(f64::NAN)
        )
    };
    show("Original", evaluate(&original, &data, &p).unwrap());
    for method in [Method::RandLabel, Method::SalUn, Method::BadT, Method::Retrain] {
        let cfg = UnlearnConfig {
            method,
            ..UnlearnConfig::default()
        };
        let r = run_unlearn(&original, &data, &p, &cfg).unwrap();
        show(method.display_name(), evaluate(&r.model, &data, &p).unwrap());
    }
}
