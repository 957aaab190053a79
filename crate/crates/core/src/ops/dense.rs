//! Affine map, softmax and mean cross-entropy in one fused head op.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DenseSoftmaxOutput {
    pub loss: f64,
    pub probs: Tensor,
    pub logits: Tensor,
}

/// input B x C, weights C x K, bias K. Loss is the mean negative
/// log-likelihood of the labels under the softmax.
pub fn dense_softmax_xent(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    labels: &[usize],
) -> Result<DenseSoftmaxOutput> {
    if input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1 {
        return Err(Error::Shape("dense head expects input B x C, weights C x K, bias K".into()));
    }
    let (b, c) = (input.shape()[0], input.shape()[1]);
    let (cw, k) = (weights.shape()[0], weights.shape()[1]);
    if c != cw || bias.shape()[0] != k {
        return Err(Error::Shape(format!(
            "dense head shapes disagree: input {:?}, weights {:?}, bias {:?}",
            input.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    if labels.len() != b {
        return Err(Error::Data(format!("need {b} labels, got {}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }

    let mut logits = Tensor::zeros(&[b, k]);
    for bi in 0..b {
        for ki in 0..k {
            let mut acc = bias.data()[ki];
            for ci in 0..c {
                acc += input.at2(bi, ci) * weights.at2(ci, ki);
            }
            logits.data_mut()[bi * k + ki] = acc;
        }
    }

    let mut probs = Tensor::zeros(&[b, k]);
    let mut loss = 0.0;
    for bi in 0..b {
        let row = &logits.data()[bi * k..(bi + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for ki in 0..k {
            denom += (row[ki] - max).exp();
        }
        let log_denom = denom.ln() + max;
        for ki in 0..k {
            probs.data_mut()[bi * k + ki] = (row[ki] - log_denom).exp();
        }
        loss -= row[labels[bi]] - log_denom;
    }
    loss /= b as f64;

    Ok(DenseSoftmaxOutput { loss, probs, logits })
}

/// Gradients of the mean cross-entropy w.r.t. input, weights and bias.
pub fn dense_softmax_xent_backward(
    input: &Tensor,
    weights: &Tensor,
    probs: &Tensor,
    labels: &[usize],
) -> (Tensor, Tensor, Tensor) {
    let (b, c) = (input.shape()[0], input.shape()[1]);
    let k = weights.shape()[1];
    let inv_b = 1.0 / b as f64;

    // dLogits = (probs - onehot) / B
    let mut d_logits = probs.clone();
    for bi in 0..b {
        d_logits.data_mut()[bi * k + labels[bi]] -= 1.0;
    }
    d_logits.data_mut().iter_mut().for_each(|v| *v *= inv_b);

    let mut d_input = Tensor::zeros(&[b, c]);
    let mut d_weights = Tensor::zeros(&[c, k]);
    let mut d_bias = Tensor::zeros(&[k]);
    for bi in 0..b {
        for ki in 0..k {
            let dl = d_logits.at2(bi, ki);
            d_bias.data_mut()[ki] += dl;
            for ci in 0..c {
                d_weights.data_mut()[ci * k + ki] += input.at2(bi, ci) * dl;
                d_input.data_mut()[bi * c + ci] += weights.at2(ci, ki) * dl;
            }
        }
    }
    (d_input, d_weights, d_bias)
}
