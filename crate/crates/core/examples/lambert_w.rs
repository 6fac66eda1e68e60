//! Principal-branch Lambert W and the SuperLoss weight built on it.
//!
//!     cargo run --example lambert_w

use speech_unlearn::nnkit::{lambert_w, BRANCH_POINT};
use speech_unlearn::unlearn::superloss_weight;

fn main() {
    println!("{:>14} {:>20} {:>12}", "x", "W(x)", "residual");
    for x in [BRANCH_POINT, -0.2, 0.0, 1.0, std::f64::consts::E, 10.0, 1e3, 1e6] {
        let w = lambert_w(x).unwrap();
        println!("{x:>14.6} {w:>20.15} {:>12.2e}", (w * w.exp() - x).abs());
    }

    println!("\nSuperLoss weight for loss l against threshold tau = 1, sl_lambda = 0.25:");
    for l in [0.0, 0.5, 1.0, 1.5, 3.0] {
        println!("  l = {l:.1}  sigma = {:.6}", superloss_weight(l, 1.0, 0.25).unwrap());
    }
}
