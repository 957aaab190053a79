//! Shared test oracles, written independently of the library's internals:
//! plain nested loops over explicitly padded buffers and Vec-of-rows math.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use restcn::restcn::{ActivationBundle, ResTCNConfig, ResTCNModel};
use restcn::tensor::Tensor;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Brute-force temporal cross-correlation over an explicitly padded copy of
/// the input. `same` pads to ceil(T/stride) outputs with the extra zero at
/// the trailing end; `valid` pads nothing.
pub fn conv_oracle(input: &Tensor, filters: &Tensor, stride: usize, same: bool) -> Tensor {
    let (b, t, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (n, f, _) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    let (t_out, pad_left) = if same {
        let t_out = t.div_ceil(stride);
        let total = ((t_out - 1) * stride + f).saturating_sub(t);
        (t_out, total / 2)
    } else {
        ((t - f) / stride + 1, 0)
    };

    let t_pad = pad_left + t + ((t_out - 1) * stride + f).saturating_sub(pad_left + t);
    let mut out = Tensor::zeros(&[b, t_out, n]);
    for bi in 0..b {
        let mut padded = vec![vec![0.0f64; c]; t_pad];
        for ti in 0..t {
            for ci in 0..c {
                padded[pad_left + ti][ci] = input.at3(bi, ti, ci);
            }
        }
        for to in 0..t_out {
            for ni in 0..n {
                let mut acc = 0.0;
                for k in 0..f {
                    for ci in 0..c {
                        acc += padded[to * stride + k][ci] * filters.at3(ni, k, ci);
                    }
                }
                let i = out.idx3(bi, to, ni);
                out.data_mut()[i] = acc;
            }
        }
    }
    out
}

/// Compressed filters as rows: hat_w[i] = (w_i(f/2) + w_i(f/2+1)) / 2 with
/// 1-based time indexing.
pub fn oracle_compress(filters: &Tensor) -> Vec<Vec<f64>> {
    let (n, f, c) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    assert_eq!(f % 2, 0, "compression needs even filter lengths");
    let step_lo = f / 2; // 1-based
    let step_hi = f / 2 + 1;
    (0..n)
        .map(|i| {
            (0..c)
                .map(|j| 0.5 * (filters.at3(i, step_lo - 1, j) + filters.at3(i, step_hi - 1, j)))
                .collect()
        })
        .collect()
}

/// Squeezes identity-path filters (N x 1 x C) into rows.
pub fn oracle_identity_rows(filters: &Tensor) -> Vec<Vec<f64>> {
    let (n, _, c) = (filters.shape()[0], filters.shape()[1], filters.shape()[2]);
    (0..n).map(|i| (0..c).map(|j| filters.at3(i, 0, j)).collect()).collect()
}

/// Weighted sum of compressed primitives: out(t) = sum_i hat_w1[i] * x(t, i).
pub fn oracle_primitive_decode(x: &Tensor, hat_w1: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (t_len, n) = (x.shape()[0], x.shape()[1]);
    let d = hat_w1[0].len();
    let mut out = vec![vec![0.0f64; d]; t_len];
    for t in 0..t_len {
        for i in 0..n {
            for j in 0..d {
                out[t][j] += hat_w1[i][j] * x.at2(t, i);
            }
        }
    }
    out
}

/// Block-boundary retrieval: out(t) = sum_i [hat[i] * (x_i(t) - b_i(t_ref))
/// + tilde[i] * b_i(t_ref)] where t_ref = t * boundary_stride.
pub fn oracle_retrieve(
    x: &Tensor,
    boundary: &Tensor,
    boundary_stride: usize,
    hat: &[Vec<f64>],
    tilde: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let (t_len, n) = (x.shape()[0], x.shape()[1]);
    let c = hat[0].len();
    let mut out = vec![vec![0.0f64; c]; t_len];
    for t in 0..t_len {
        for i in 0..n {
            let xv = x.at2(t, i);
            let bv = boundary.at2(t * boundary_stride, i);
            for j in 0..c {
                out[t][j] += hat[i][j] * (xv - bv) + tilde[i][j] * bv;
            }
        }
    }
    out
}

/// End-to-end decoder oracle for any layer, mirroring the published decode
/// chain: Block A direct, Block B retrieved through the layer-5 banks using
/// the recorded X5, Block C first through the layer-8 banks using X8.
pub fn oracle_decode_raw(bundle: &ActivationBundle, model: &ResTCNModel, layer: usize) -> Vec<Vec<f64>> {
    let w1 = &model.stack.conv1.value;
    let hat_w1 = oracle_compress(w1);
    let x = bundle.layer(layer).unwrap();
    match layer {
        1..=4 => oracle_primitive_decode(x, &hat_w1),
        5..=7 => {
            let unit5 = model.stack.unit(5);
            let hat5 = oracle_compress(&unit5.conv.value);
            let tilde5 = oracle_identity_rows(&unit5.shortcut.as_ref().unwrap().value);
            let retrieved = oracle_retrieve(x, bundle.layer(5).unwrap(), 1, &hat5, &tilde5);
            let as_tensor = rows_to_tensor(&retrieved);
            oracle_primitive_decode(&as_tensor, &hat_w1)
        }
        8..=10 => {
            let unit8 = model.stack.unit(8);
            let hat8 = oracle_compress(&unit8.conv.value);
            let tilde8 = oracle_identity_rows(&unit8.shortcut.as_ref().unwrap().value);
            let in_c2 = oracle_retrieve(x, bundle.layer(8).unwrap(), 1, &hat8, &tilde8);
            let unit5 = model.stack.unit(5);
            let hat5 = oracle_compress(&unit5.conv.value);
            let tilde5 = oracle_identity_rows(&unit5.shortcut.as_ref().unwrap().value);
            let stride = model.config.layer_stride(8);
            let in_c1 =
                oracle_retrieve(&rows_to_tensor(&in_c2), bundle.layer(5).unwrap(), stride, &hat5, &tilde5);
            oracle_primitive_decode(&rows_to_tensor(&in_c1), &hat_w1)
        }
        _ => panic!("layer {layer} out of range"),
    }
}

pub fn rows_to_tensor(rows: &[Vec<f64>]) -> Tensor {
    let (t, c) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(&[t, c], flat).unwrap()
}

pub fn max_abs_diff_rows(a: &Tensor, rows: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..a.shape()[0] {
        for c in 0..a.shape()[1] {
            worst = worst.max((a.at2(t, c) - rows[t][c]).abs());
        }
    }
    worst
}

/// The tiny model family used by the deep-layer decoder oracles.
pub fn tiny_decode_config(seed_shift: u64) -> ResTCNConfig {
    ResTCNConfig {
        input_dim: 3 + (seed_shift % 3) as usize,
        num_classes: 3,
        block_channels: [
            2 + (seed_shift % 2) as usize,
            3,
            4,
        ],
        first_filter_len: 4,
        unit_filter_len: 4,
        dropout_p: 0.0,
        downsample: true,
    }
}

pub fn record_bundle(model: &ResTCNModel, t: usize, seed: u64) -> ActivationBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.config.input_dim;
    let x0 = random_tensor(&mut rng, &[1, t, d]);
    model.forward_eval(&x0, true).unwrap().bundles.unwrap().remove(0)
}
