//! SuperLoss sample re-weighting.
//!
//! Each sample weight σ minimizes `(l − τ)·σ + λ·(log σ)²`. Setting the
//! derivative to zero gives `log σ / σ = −β` with `β = (l − τ) / (2λ)`,
//! whose principal solution is `σ* = exp(−W₀(β))`. β is clamped at `−1/e`
//! to stay on the principal branch, so weights saturate at `e` for very
//! easy samples.

use crate::error::{Error, Result};
use crate::nnkit::{lambert_w, BRANCH_POINT};

/// Closed-form SuperLoss weight for loss `l` against threshold `tau`.
pub fn superloss_weight(l: f64, tau: f64, sl_lambda: f64) -> Result<f64> {
    if !(sl_lambda > 0.0 && sl_lambda.is_finite()) {
        return Err(Error::invalid("sl_lambda", format!("must be positive, got {sl_lambda}")));
    }
    let beta = ((l - tau) / (2.0 * sl_lambda)).max(BRANCH_POINT);
    Ok((-lambert_w(beta)?).exp())
}

/// Running state of the SuperLoss wrapper: the threshold τ, an exponential
/// moving average of batch-mean forgetting losses.
#[derive(Clone, Debug)]
pub struct SuperLoss {
    sl_lambda: f64,
    ema: f64,
    tau: Option<f64>,
}

impl SuperLoss {
    pub fn new(sl_lambda: f64, ema: f64) -> Result<Self> {
        if !(sl_lambda > 0.0 && sl_lambda.is_finite()) {
            return Err(Error::invalid("sl_lambda", "must be positive"));
        }
        if !(ema > 0.0 && ema <= 1.0) {
            return Err(Error::invalid("sl_ema", format!("{ema} is outside (0, 1]")));
        }
        Ok(Self {
            sl_lambda,
            ema,
            tau: None,
        })
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Weights for one minibatch of per-sample forgetting losses.
    ///
    /// τ is initialized to the first batch mean; weights use τ as it stands
    /// before this batch, after which τ absorbs the batch mean.
    pub fn weigh(&mut self, losses: &[f64]) -> Result<Vec<f64>> {
        if losses.is_empty() {
            return Ok(Vec::new());
        }
        let mean = exact_mean(losses);
        let tau = *self.tau.get_or_insert(mean);
        let weights = losses
            .iter()
            .map(|&l| superloss_weight(l, tau, self.sl_lambda))
            .collect::<Result<Vec<_>>>()?;
        self.tau = Some(self.ema * tau + (1.0 - self.ema) * mean);
        Ok(weights)
    }
}

/// Mean computed as `x₀ + Σ(xᵢ − x₀)/n`, exact when all values are equal.
fn exact_mean(values: &[f64]) -> f64 {
    let first = values[0];
    let n = values.len() as f64;
    first + values.iter().map(|v| v - first).sum::<f64>() / n
}
