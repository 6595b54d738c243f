//! Supervised cross-entropy on the weak view, prototype contrastive loss on
//! the strong view, and their weighted sum.

use crate::bank::MemoryBank;
use crate::error::{Error, Result};
use crate::labels::TrainId;
use crate::matrix::{axpy, dot, Mat};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const DEFAULT_LAMBDA_CT: f64 = 0.1;

/// A scalar loss and its gradient wrt the scored input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Mat,
}

/// `log Σ exp(v)` with max subtraction; also returns the softmax.
fn log_softmax_parts(v: &[f64]) -> (f64, Vec<f64>) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Mean over scored points of
/// `−log( exp(f·B₊/τ) / Σ_j exp(f·B_j/τ) )`.
///
/// A point is scored when its label is a bank class whose prototype is
/// initialized; the sum over `j` runs over initialized prototypes only.
/// Prototypes are constants, so the gradient is wrt `strong` alone. With no
/// scored point the loss and gradient are zero.
pub fn contrastive_loss(
    strong: &Mat,
    labels: &[TrainId],
    bank: &MemoryBank,
    temperature: f64,
) -> Result<LossGrad> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Argument(format!("temperature {temperature} must be positive")));
    }
    if strong.rows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} embeddings for {} labels",
            strong.rows(),
            labels.len()
        )));
    }
    if strong.cols() != bank.embed_dim() {
        return Err(Error::Argument(format!(
            "embedding width {} does not match bank width {}",
            strong.cols(),
            bank.embed_dim()
        )));
    }

    let keys: Vec<usize> = (0..bank.num_classes()).filter(|&c| bank.is_initialized(c)).collect();
    let mut grad = Mat::zeros(strong.rows(), strong.cols());
    let mut total = 0.0;
    let mut scored = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let Some(pos) = keys.iter().position(|&c| c == label as usize) else {
            continue;
        };
        let f = strong.row(i);
        let logits: Vec<f64> = keys.iter().map(|&c| dot(f, bank.prototype(c)) / temperature).collect();
        let (lse, probs) = log_softmax_parts(&logits);
        total += lse - logits[pos];
        scored += 1;

        let g = grad.row_mut(i);
        for (k, &c) in keys.iter().enumerate() {
            let coef = if k == pos { probs[k] - 1.0 } else { probs[k] };
            axpy(coef / temperature, bank.prototype(c), g);
        }
    }
    if scored > 0 {
        grad.scale(1.0 / scored as f64);
        total /= scored as f64;
    }
    Ok(LossGrad { loss: total, grad })
}

/// Mean softmax cross-entropy over points labeled with one of the `C =
/// logits.cols()` scored classes; gradient wrt the logits.
pub fn cross_entropy(logits: &Mat, labels: &[TrainId]) -> Result<LossGrad> {
    if logits.rows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let c = logits.cols();
    let mut grad = Mat::zeros(logits.rows(), c);
    let mut total = 0.0;
    let mut scored = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let y = label as usize;
        if y >= c {
            continue;
        }
        let (lse, probs) = log_softmax_parts(logits.row(i));
        total += lse - logits.get(i, y);
        scored += 1;
        let g = grad.row_mut(i);
        g.copy_from_slice(&probs);
        g[y] -= 1.0;
    }
    if scored > 0 {
        grad.scale(1.0 / scored as f64);
        total /= scored as f64;
    }
    Ok(LossGrad { loss: total, grad })
}

/// Loss terms of one step. `total == ce + lambda_ct * ct`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub ct: f64,
    pub total: f64,
    pub lambda_ct: f64,
}

impl LossBreakdown {
    pub fn new(ce: f64, ct: f64, lambda_ct: f64) -> Self {
        Self {
            ce,
            ct,
            total: ce + lambda_ct * ct,
            lambda_ct,
        }
    }
}

/// Cross-entropy of the weak-view logits combined with a contrastive term.
pub fn total_loss(weak_logits: &Mat, labels: &[TrainId], ct: f64, lambda_ct: f64) -> Result<LossBreakdown> {
    let ce = cross_entropy(weak_logits, labels)?.loss;
    Ok(LossBreakdown::new(ce, ct, lambda_ct))
}
