//! ReLU and inverted dropout.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Subgradient convention: 0 at exactly 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    assert_eq!(input.shape(), grad_out.shape());
    let mut d = Tensor::zeros(input.shape());
    for i in 0..input.len() {
        if input.data()[i] > 0.0 {
            d.data_mut()[i] = grad_out.data()[i];
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by 1/(1-p), so eval mode is the identity.
/// The mask is a pure function of `seed`.
pub fn dropout_forward(input: &Tensor, p: f64, mode: Mode, seed: u64) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Param(format!("dropout p must be in [0, 1), got {p}")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_scale = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(input.shape());
    for m in mask.data_mut() {
        if rng.random::<f64>() >= p {
            *m = keep_scale;
        }
    }
    let mut out = input.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&Tensor>) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let mut d = grad_out.clone();
            for (g, m) in d.data_mut().iter_mut().zip(m.data()) {
                *g *= m;
            }
            d
        }
    }
}
