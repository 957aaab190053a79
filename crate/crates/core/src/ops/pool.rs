//! Global average pooling over the temporal axis.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// B x T x C -> B x C, mean over T.
pub fn global_average_pool(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!("pool input must be B x T x C, got {:?}", input.shape())));
    }
    let (b, t, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if t == 0 {
        return Err(Error::Param("pool needs at least one frame".into()));
    }
    let mut out = Tensor::zeros(&[b, c]);
    for bi in 0..b {
        for ti in 0..t {
            for ci in 0..c {
                out.data_mut()[bi * c + ci] += input.at3(bi, ti, ci);
            }
        }
    }
    out.data_mut().iter_mut().for_each(|v| *v /= t as f64);
    Ok(out)
}

/// Distributes 1/T of the pooled gradient to every frame.
pub fn global_average_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (b, t, c) = (input_shape[0], input_shape[1], input_shape[2]);
    assert_eq!(grad_out.shape(), &[b, c]);
    let mut d = Tensor::zeros(input_shape);
    let scale = 1.0 / t as f64;
    for bi in 0..b {
        for ti in 0..t {
            for ci in 0..c {
                let i = d.idx3(bi, ti, ci);
                d.data_mut()[i] = grad_out.at2(bi, ci) * scale;
            }
        }
    }
    d
}
