//! Temporal 1-D convolution (cross-correlation) over B x T x C tensors,
//! with exact input and filter gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero-pads so the output length is ceil(T / stride). An odd pad total
    /// puts the extra zero at the trailing end.
    Same,
    /// No padding; output length is floor((T - f) / stride) + 1.
    Valid,
}

/// Output temporal extent and left pad for the given input extent.
pub fn conv_out_len(t: usize, f: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::Param("conv1d stride must be positive".into()));
    }
    match padding {
        Padding::Same => {
            let t_out = t.div_ceil(stride);
            let needed = (t_out - 1) * stride + f;
            let total_pad = needed.saturating_sub(t);
            Ok((t_out, total_pad / 2))
        }
        Padding::Valid => {
            if f > t {
                return Err(Error::Param(format!(
                    "valid conv needs filter length {} <= input length {}",
                    f, t
                )));
            }
            Ok(((t - f) / stride + 1, 0))
        }
    }
}

fn check_shapes(input: &Tensor, filters: &Tensor) -> Result<()> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!("conv1d input must be B x T x C, got {:?}", input.shape())));
    }
    if filters.rank() != 3 {
        return Err(Error::Shape(format!("conv1d filters must be N x f x C, got {:?}", filters.shape())));
    }
    if input.shape()[2] != filters.shape()[2] {
        return Err(Error::Shape(format!(
            "conv1d channel mismatch: input has {}, filters expect {}",
            input.shape()[2],
            filters.shape()[2]
        )));
    }
    Ok(())
}

/// Cross-correlation of `input` (B x T x C_in) with `filters` (N x f x C_in).
/// No bias term. Returns B x T_out x N.
pub fn conv1d_forward(input: &Tensor, filters: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
    check_shapes(input, filters)?;
    let (b, t, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (n, f, _) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    let (t_out, pad_left) = conv_out_len(t, f, stride, padding)?;

    let mut out = Tensor::zeros(&[b, t_out, n]);
    let x = input.data();
    let w = filters.data();
    let o = out.data_mut();
    for bi in 0..b {
        for to in 0..t_out {
            for ni in 0..n {
                let mut acc = 0.0;
                for k in 0..f {
                    let j = (to * stride + k) as isize - pad_left as isize;
                    if j < 0 || j >= t as isize {
                        continue;
                    }
                    let xrow = (bi * t + j as usize) * c;
                    let wrow = (ni * f + k) * c;
                    for ci in 0..c {
                        acc += x[xrow + ci] * w[wrow + ci];
                    }
                }
                o[(bi * t_out + to) * n + ni] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of `conv1d_forward` w.r.t. input and filters for an upstream
/// gradient `grad_out` of shape B x T_out x N.
pub fn conv1d_backward(
    input: &Tensor,
    filters: &Tensor,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    check_shapes(input, filters)?;
    let (b, t, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (n, f, _) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    let (t_out, pad_left) = conv_out_len(t, f, stride, padding)?;
    if grad_out.shape() != [b, t_out, n] {
        return Err(Error::Shape(format!(
            "conv1d grad_out must be {:?}, got {:?}",
            [b, t_out, n],
            grad_out.shape()
        )));
    }

    let mut d_input = Tensor::zeros(input.shape());
    let mut d_filters = Tensor::zeros(filters.shape());
    let x = input.data();
    let w = filters.data();
    let g = grad_out.data();
    let dx = d_input.data_mut();
    let dw = d_filters.data_mut();
    for bi in 0..b {
        for to in 0..t_out {
            for ni in 0..n {
                let go = g[(bi * t_out + to) * n + ni];
                if go == 0.0 {
                    continue;
                }
                for k in 0..f {
                    let j = (to * stride + k) as isize - pad_left as isize;
                    if j < 0 || j >= t as isize {
                        continue;
                    }
                    let xrow = (bi * t + j as usize) * c;
                    let wrow = (ni * f + k) * c;
                    for ci in 0..c {
                        dw[wrow + ci] += go * x[xrow + ci];
                        dx[xrow + ci] += go * w[wrow + ci];
                    }
                }
            }
        }
    }
    Ok((d_input, d_filters))
}
