//! Auxiliary heads on the encoder context: next-hour extrema regression and
//! a real-vs-fake discriminator. Both are affine readouts of the embedding;
//! their losses regularize the encoder during pretraining and joint training.

use crate::autodiff::array::gemm;
use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::timeseries::types::N_VARS;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `contexts @ w + b` for a batch of embeddings. Used by both heads:
/// regression has `w: H x 6`, the discriminator `w: H x 1`.
pub fn affine_head(contexts: &Array, w: &Array, b: &Array) -> Result<Array> {
    if contexts.cols() != w.rows() || b.shape() != (1, w.cols()) {
        return Err(Error::shape(
            "affine_head",
            format!("contexts {:?}, w {:?}, b {:?}", contexts.shape(), w.shape(), b.shape()),
        ));
    }
    let mut out = Array::zeros(contexts.rows(), w.cols());
    gemm(false, false, 1.0, contexts, w, 0.0, &mut out);
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            let v = out.get(r, c) + b.get(0, c);
            out.set(r, c, v);
        }
    }
    Ok(out)
}

/// Masked mean squared error for the extrema head. `labels[i][d]` is `None`
/// when encounter `i` has no next-hour observation of variable `d`; absent
/// labels contribute nothing to the sum and shrink the denominator. `None`
/// when every label is absent.
pub fn regression_loss(preds: &Array, labels: &[[Option<f64>; N_VARS]]) -> Result<Option<f64>> {
    if preds.shape() != (labels.len(), N_VARS) {
        return Err(Error::shape(
            "regression_loss",
            format!("preds {:?} vs {} x {N_VARS} labels", preds.shape(), labels.len()),
        ));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, row) in labels.iter().enumerate() {
        for (d, label) in row.iter().enumerate() {
            if let Some(y) = label {
                let e = preds.get(i, d) - y;
                sum += e * e;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { None } else { Some(sum / n as f64) })
}

/// Discriminator probability that each row is a real encounter.
pub fn discriminate(logits: &Array) -> Vec<f64> {
    logits.data().iter().map(|&x| sigmoid(x)).collect()
}

/// Mean binary cross-entropy of `n x 1` logits against real-encounter
/// targets (real = 1, fake = 0), in the numerically fused form
/// `softplus(x) - y x`.
pub fn bce_loss(logits: &Array, is_real: &[bool]) -> Result<f64> {
    if logits.shape() != (is_real.len(), 1) || is_real.is_empty() {
        return Err(Error::shape(
            "bce_loss",
            format!("logits {:?} vs {} targets", logits.shape(), is_real.len()),
        ));
    }
    let sum: f64 = logits
        .data()
        .iter()
        .zip(is_real)
        .map(|(&x, &real)| softplus(x) - if real { x } else { 0.0 })
        .sum();
    Ok(sum / is_real.len() as f64)
}
