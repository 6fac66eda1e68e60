use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities below this are floored before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Overflow-safe softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

fn floored_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// A batch loss together with its per-sample values and the gradient of the
/// batch mean with respect to the logits it was computed from.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub grad: Matrix,
}

impl LossOutput {
    /// Re-weights the batch mean to `Σ wᵢ·lᵢ / n`, scaling gradient rows to
    /// match. Weights are treated as constants.
    pub fn reweighted(mut self, weights: &[f64]) -> Result<LossOutput> {
        if weights.len() != self.per_sample.len() {
            return Err(Error::shape(self.per_sample.len(), weights.len()));
        }
        let n = self.per_sample.len().max(1) as f64;
        for (r, &w) in weights.iter().enumerate() {
            for g in self.grad.row_mut(r) {
                *g *= w;
            }
        }
        self.loss = self
            .per_sample
            .iter()
            .zip(weights)
            .map(|(l, w)| w * l)
            .sum::<f64>()
            / n;
        Ok(self)
    }

    /// Multiplies loss and gradient by `factor` (per-sample values untouched).
    pub fn scaled(mut self, factor: f64) -> LossOutput {
        self.loss *= factor;
        self.grad.map_inplace(|g| g * factor);
        self
    }
}

/// Mean cross-entropy `−log p(label)`; gradient `(softmax − onehot) / n`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<LossOutput> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            format!("{} labels", logits.rows()),
            format!("{}", labels.len()),
        ));
    }
    let k = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }
    let n = labels.len();
    let mut grad = softmax_rows(logits);
    let mut per_sample = Vec::with_capacity(n);
    let scale = 1.0 / n.max(1) as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        per_sample.push(-floored_ln(row[label]));
        row[label] -= 1.0;
        for g in row.iter_mut() {
            *g *= scale;
        }
    }
    let loss = per_sample.iter().sum::<f64>() * scale;
    Ok(LossOutput {
        loss,
        per_sample,
        grad,
    })
}

/// Mean `KL(softmax(p) ‖ softmax(q))` over rows, with gradient w.r.t. `p`.
///
/// Row gradient: `p_j · (log p_j − log q_j − KL) / n`.
pub fn kl_divergence(p_logits: &Matrix, q_logits: &Matrix) -> Result<LossOutput> {
    if p_logits.shape() != q_logits.shape() {
        return Err(Error::shape(
            format!("{:?}", p_logits.shape()),
            format!("{:?}", q_logits.shape()),
        ));
    }
    let n = p_logits.rows();
    let scale = 1.0 / n.max(1) as f64;
    let p = softmax_rows(p_logits);
    let q = softmax_rows(q_logits);
    let mut grad = Matrix::zeros(n, p_logits.cols());
    let mut per_sample = Vec::with_capacity(n);
    for r in 0..n {
        let (pr, qr) = (p.row(r), q.row(r));
        let log_ratio: Vec<f64> = pr
            .iter()
            .zip(qr)
            .map(|(&a, &b)| floored_ln(a) - floored_ln(b))
            .collect();
        let kl: f64 = pr.iter().zip(&log_ratio).map(|(a, l)| a * l).sum();
        // rounding can leave a tiny negative for near-identical rows
        let kl = kl.max(0.0);
        per_sample.push(kl);
        for ((g, &a), &l) in grad.row_mut(r).iter_mut().zip(pr).zip(&log_ratio) {
            *g = a * (l - kl) * scale;
        }
    }
    let loss = per_sample.iter().sum::<f64>() * scale;
    Ok(LossOutput {
        loss,
        per_sample,
        grad,
    })
}

/// Mean over rows of the squared Euclidean distance `‖a − b‖²`, with
/// gradient w.r.t. `a`.
pub fn mean_squared_distance(a: &Matrix, b: &Matrix) -> Result<LossOutput> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let n = a.rows();
    let scale = 1.0 / n.max(1) as f64;
    let mut grad = Matrix::zeros(n, a.cols());
    let mut per_sample = Vec::with_capacity(n);
    for r in 0..n {
        let mut d2 = 0.0;
        for ((g, &x), &y) in grad.row_mut(r).iter_mut().zip(a.row(r)).zip(b.row(r)) {
            let d = x - y;
            d2 += d * d;
            *g = 2.0 * d * scale;
        }
        per_sample.push(d2);
    }
    let loss = per_sample.iter().sum::<f64>() * scale;
    Ok(LossOutput {
        loss,
        per_sample,
        grad,
    })
}
