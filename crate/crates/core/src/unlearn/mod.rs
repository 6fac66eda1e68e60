//! Training, the retrain-from-scratch oracle and the unlearning methods.
//!
//! Every method fine-tunes the original model f into f' by minimizing a
//! forgetting term on D_f plus λ times a retaining term on D_r:
//!
//! | method       | forgetting term                      | retaining term                  | λ    |
//! |--------------|--------------------------------------|---------------------------------|------|
//! | GradAscent   | −CE(D_f)                             | none                            | 0    |
//! | RandLabel    | CE(D_f, random wrong labels)         | CE(D_r)                         | 1    |
//! | SalUn        | as RandLabel, salient parameters only| CE(D_r)                         | 1    |
//! | SCRUB        | −CE(D_f), then repair phase          | CE(D_r) + λ‖emb_f' − emb_f‖²    | cfg  |
//! | Bad-T        | KL(f'(D_f) ‖ f_d(D_f))               | KL(f'(D_r) ‖ f(D_r))            | 1    |
//!
//! SuperLoss re-weighting can wrap the forgetting term of any of them.

mod config;
mod methods;
mod superloss;
mod train;

pub use config::{
    EpochTrace, GradientUsage, Method, MethodSpec, TrainSettings, UnlearnConfig, UnlearnResult,
};
pub use methods::{
    bad_t, bad_t_terms, compute_saliency_mask, corrupt_labels, embedding_distance, grad_ascent,
    incompetent_teacher, rand_label, run_unlearn, salun, scrub,
};
pub use superloss::{superloss_weight, SuperLoss};
pub use train::{accuracy, mean_loss, per_sample_losses, retrain_oracle, train};
