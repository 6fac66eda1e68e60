//! Compares back-propagated gradients against central finite differences
//! on a few small random models.
//!
//!     cargo run --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speech_unlearn::nnkit::{
    cross_entropy, cross_entropy_grad, finite_difference_grad, init_model, kl_divergence, kl_grad, Matrix,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let model = init_model(4, &[6, 5], 3, seed).unwrap();
        let data = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(3, 4, data).unwrap();
        let labels = [0, 2, 1];
        let target = Matrix::from_vec(3, 3, (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();

        let ce = cross_entropy_grad(&model, &x, &labels).unwrap();
        let fd = finite_difference_grad(&model, 1e-5, |m| cross_entropy(&m.logits(&x).unwrap(), &labels).unwrap().loss);
        let kl = kl_grad(&model, &x, &target).unwrap();
        let fd_kl = finite_difference_grad(&model, 1e-5, |m| kl_divergence(&m.logits(&x).unwrap(), &target).unwrap().loss);

        println!(
            "model {seed}: {} params, max |analytic - numeric|: CE {:.2e}, KL {:.2e}",
            model.param_count(),
            max_gap(&ce.flat(), &fd),
            max_gap(&kl.flat(), &fd_kl)
        );
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
