//! Gradient ascent with and without SuperLoss re-weighting, averaged over
//! five seeds, plus the per-epoch forgetting loss of one run.
//!
//!     cargo run --release --example superloss_forgetting

use speech_unlearn::bench::evaluate;
use speech_unlearn::speechgen::{generate, select_forget, split, ForgetSpec, GenSpec, Task};
use speech_unlearn::unlearn::{run_unlearn, train, Method, TrainSettings, UnlearnConfig};

fn main() {
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let mut sums = [[0.0; 2]; 2];
    for seed in 0..5 {
        let base = split(&corpus, Task::Keyword, 0.2, seed).unwrap();
        let original = train(&data, &base, &TrainSettings::default(), seed).unwrap();
        let p = select_forget(&base, &ForgetSpec::Sample { ratio: 0.05, seed }, &data.labels).unwrap();
        for (k, superloss_enabled) in [false, true].into_iter().enumerate() {
            let cfg = UnlearnConfig {
                method: Method::GradAscent,
                superloss_enabled,
                seed,
                ..UnlearnConfig::default()
            };
            let r = run_unlearn(&original, &data, &p, &cfg).unwrap();
            let m = evaluate(&r.model, &data, &p).unwrap();
            sums[k][0] += m.acc_forget / 5.0;
            sums[k][1] += m.acc_retain / 5.0;
            if seed == 0 {
                let losses: Vec<String> = r.trace.iter().map(|t| format!("{:.2}", t.loss_forget)).collect();
                println!("seed 0, superloss {superloss_enabled}: D_f loss per epoch {}", losses.join(" "));
            }
        }
    }
    println!("GradAscent            D_f {:6.2}  D_r {:6.2}", sums[0][0], sums[0][1]);
    println!("GradAscent+SuperLoss  D_f {:6.2}  D_r {:6.2}", sums[1][0], sums[1][1]);
}
