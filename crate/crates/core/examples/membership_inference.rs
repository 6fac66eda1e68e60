//! Calibrates the loss-threshold attack on a trained model and probes the
//! forget set before and after unlearning.
//!
//!     cargo run --release --example membership_inference

use speech_unlearn::evalkit::{calibrate_mia, mia_score};
use speech_unlearn::speechgen::{generate, select_forget, split, ForgetSpec, GenSpec, Task};
use speech_unlearn::unlearn::{run_unlearn, train, Method, TrainSettings, UnlearnConfig};

fn main() {
    let corpus = generate(&GenSpec::default()).unwrap();
    let data = corpus.task_data(Task::Keyword).unwrap();
    let base = split(&corpus, Task::Keyword, 0.2, 1).unwrap();
    let original = train(&data, &base, &TrainSettings::default(), 1).unwrap();
    let p = select_forget(&base, &ForgetSpec::Sample { ratio: 0.1, seed: 1 }, &data.labels).unwrap();

    for (name, model) in [
        ("Original", original.clone()),
        (
            "RandLabel",
            run_unlearn(&original, &data, &p, &UnlearnConfig { method: Method::RandLabel, ..UnlearnConfig::default() })
                .unwrap()
                .model,
        ),
    ] {
        let attacker = calibrate_mia(&model, &data, &p.retain_ids, &p.test_ids).unwrap();
        println!(
            "{name:<10} threshold {:.4} ({:?}), calibration BA {:.2}%, member loss {:.4}, non-member loss {:.4}",
            attacker.threshold,
            attacker.orientation,
            attacker.balanced_accuracy,
            attacker.member_mean_loss,
            attacker.nonmember_mean_loss
        );
        println!("{:<10} D_f judged non-member: {:.2}%", "", mia_score(&attacker, &model, &data, &p.forget_ids).unwrap());
    }
}
