//! Per-channel batch normalization over the batch and temporal axes.

use crate::error::{Error, Result};
use crate::optim::{ParamKind, Parameter};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub name: String,
    pub scale: Parameter,
    pub shift: Parameter,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    /// Running-stat blend: running = momentum * running + (1 - momentum) * batch.
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(name: &str, channels: usize) -> BatchNormState {
        BatchNormState {
            name: name.to_string(),
            scale: Parameter::new(
                format!("{name}.scale"),
                Tensor::filled(&[channels], 1.0),
                ParamKind::BnScale,
            ),
            shift: Parameter::new(
                format!("{name}.shift"),
                Tensor::zeros(&[channels]),
                ParamKind::BnShift,
            ),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            epsilon: 1e-5,
            momentum: 0.9,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.value.shape()[0]
    }
}

/// Intermediates of a train-mode forward, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

fn check_input(input: &Tensor, state: &BatchNormState) -> Result<(usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!("batchnorm input must be B x T x C, got {:?}", input.shape())));
    }
    let (b, t, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if c != state.channels() {
        return Err(Error::Shape(format!(
            "batchnorm channel mismatch: input has {}, state has {}",
            c,
            state.channels()
        )));
    }
    if b * t == 0 {
        return Err(Error::Param("batchnorm needs a non-empty batch-time extent".into()));
    }
    Ok((b, t, c))
}

/// Train-mode forward: normalizes with batch statistics and updates the
/// running statistics in place.
pub fn batchnorm_train(input: &Tensor, state: &mut BatchNormState) -> Result<(Tensor, BatchNormCache)> {
    let (b, t, c) = check_input(input, state)?;
    let m = (b * t) as f64;
    let x = input.data();

    let mut mean = vec![0.0; c];
    for row in 0..b * t {
        for ci in 0..c {
            mean[ci] += x[row * c + ci];
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);

    let mut var = vec![0.0; c];
    for row in 0..b * t {
        for ci in 0..c {
            let d = x[row * c + ci] - mean[ci];
            var[ci] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= m);

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + state.epsilon).sqrt()).collect();
    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    {
        let nd = normalized.data_mut();
        let od = out.data_mut();
        let gamma = state.scale.value.data();
        let beta = state.shift.value.data();
        for row in 0..b * t {
            for ci in 0..c {
                let xn = (x[row * c + ci] - mean[ci]) * inv_std[ci];
                nd[row * c + ci] = xn;
                od[row * c + ci] = gamma[ci] * xn + beta[ci];
            }
        }
    }

    let mom = state.momentum;
    for ci in 0..c {
        let rm = state.running_mean.data_mut();
        rm[ci] = mom * rm[ci] + (1.0 - mom) * mean[ci];
        let rv = state.running_var.data_mut();
        rv[ci] = mom * rv[ci] + (1.0 - mom) * var[ci];
    }

    Ok((out, BatchNormCache { normalized, inv_std }))
}

/// Eval-mode forward: a per-channel affine map using running statistics only,
/// so the output for a sample does not depend on its batch companions.
pub fn batchnorm_eval(input: &Tensor, state: &BatchNormState) -> Result<Tensor> {
    let (b, t, c) = check_input(input, state)?;
    let x = input.data();
    let gamma = state.scale.value.data();
    let beta = state.shift.value.data();
    let rm = state.running_mean.data();
    let rv = state.running_var.data();
    let mut out = Tensor::zeros(input.shape());
    let od = out.data_mut();
    for row in 0..b * t {
        for ci in 0..c {
            let inv = 1.0 / (rv[ci] + state.epsilon).sqrt();
            od[row * c + ci] = gamma[ci] * (x[row * c + ci] - rm[ci]) * inv + beta[ci];
        }
    }
    Ok(out)
}

/// Train-mode backward. Accumulates scale/shift gradients into the state's
/// parameters and returns the input gradient.
pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BatchNormCache,
    state: &mut BatchNormState,
) -> Result<Tensor> {
    let shape = cache.normalized.shape();
    if grad_out.shape() != shape {
        return Err(Error::Shape(format!(
            "batchnorm grad_out must be {:?}, got {:?}",
            shape,
            grad_out.shape()
        )));
    }
    let (b, t, c) = (shape[0], shape[1], shape[2]);
    let m = (b * t) as f64;
    let g = grad_out.data();
    let xn = cache.normalized.data();
    let gamma = state.scale.value.data();

    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for row in 0..b * t {
        for ci in 0..c {
            sum_g[ci] += g[row * c + ci];
            sum_gx[ci] += g[row * c + ci] * xn[row * c + ci];
        }
    }

    for ci in 0..c {
        state.scale.grad.data_mut()[ci] += sum_gx[ci];
        state.shift.grad.data_mut()[ci] += sum_g[ci];
    }

    // dX = gamma * inv_std * (g - mean(g) - xn * mean(g * xn))
    let mut d_input = Tensor::zeros(shape);
    let dx = d_input.data_mut();
    for row in 0..b * t {
        for ci in 0..c {
            let centered = g[row * c + ci] - sum_g[ci] / m - xn[row * c + ci] * sum_gx[ci] / m;
            dx[row * c + ci] = gamma[ci] * cache.inv_std[ci] * centered;
        }
    }
    Ok(d_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn train_mode_normalizes_per_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_tensor(&mut rng, &[2, 8, 3]).map(|v| 3.0 * v + 1.5);
        let mut state = BatchNormState::new("bn", 3);
        let (out, _) = batchnorm_train(&input, &mut state).unwrap();
        let m = 16.0;
        for ci in 0..3 {
            let mean: f64 = (0..16).map(|r| out.data()[r * 3 + ci]).sum::<f64>() / m;
            let var: f64 = (0..16).map(|r| (out.data()[r * 3 + ci] - mean).powi(2)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-12, "channel {ci} mean {mean}");
            // Variance lands just below 1 because of epsilon.
            assert!((var - 1.0).abs() < 1e-3, "channel {ci} var {var}");
        }
    }

    #[test]
    fn eval_mode_is_affine_in_running_stats() {
        let mut state = BatchNormState::new("bn", 2);
        state.scale.value.fill(2.0);
        state.shift.value.fill(3.0);
        let input = Tensor::from_vec(&[1, 3, 2], vec![0.5, -1.0, 2.0, 0.0, 1.0, -3.0]).unwrap();
        let out = batchnorm_eval(&input, &state).unwrap();
        let inv = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (o, x) in out.data().iter().zip(input.data()) {
            assert!((o - (2.0 * x * inv + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_output_ignores_batch_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = BatchNormState::new("bn", 3);
        state.running_mean = random_tensor(&mut rng, &[3]);
        state.running_var = random_tensor(&mut rng, &[3]).map(|v| v.abs() + 0.5);
        let a = random_tensor(&mut rng, &[1, 5, 3]);
        let b = random_tensor(&mut rng, &[1, 5, 3]);
        let mut stacked = Tensor::zeros(&[2, 5, 3]);
        stacked.data_mut()[..15].copy_from_slice(a.data());
        stacked.data_mut()[15..].copy_from_slice(b.data());

        let alone = batchnorm_eval(&a, &state).unwrap();
        let together = batchnorm_eval(&stacked, &state).unwrap();
        assert_eq!(&together.data()[..15], alone.data());
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut state = BatchNormState::new("bn", 1);
        let input = Tensor::from_vec(&[1, 2, 1], vec![1.0, 3.0]).unwrap();
        batchnorm_train(&input, &mut state).unwrap();
        // batch mean 2, biased var 1; running starts at (0, 1).
        assert!((state.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((state.running_var.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_time_is_param_error() {
        let mut state = BatchNormState::new("bn", 2);
        let input = Tensor::zeros(&[0, 4, 2]);
        assert!(batchnorm_train(&input, &mut state).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(&mut rng, &[2, 6, 4]);
        let mut state = BatchNormState::new("bn", 4);
        state.scale.value = random_tensor(&mut rng, &[4]).map(|v| v + 1.5);
        state.shift.value = random_tensor(&mut rng, &[4]);
        let grad_out = random_tensor(&mut rng, &[2, 6, 4]);

        let (_, cache) = batchnorm_train(&input, &mut state.clone()).unwrap();
        let mut grads_state = state.clone();
        let d_input = batchnorm_backward(&grad_out, &cache, &mut grads_state).unwrap();

        let loss_of_input = |x: &Tensor| {
            let (o, _) = batchnorm_train(x, &mut state.clone()).unwrap();
            o.data().iter().zip(grad_out.data()).map(|(a, b)| a * b).sum()
        };
        check_gradients(&input, &d_input, loss_of_input, 1e-3, 1e-4);

        let loss_of_scale = |s: &Tensor| {
            let mut st = state.clone();
            st.scale.value = s.clone();
            let (o, _) = batchnorm_train(&input, &mut st).unwrap();
            o.data().iter().zip(grad_out.data()).map(|(a, b)| a * b).sum()
        };
        check_gradients(&state.scale.value, &grads_state.scale.grad, loss_of_scale, 1e-3, 1e-4);

        let loss_of_shift = |s: &Tensor| {
            let mut st = state.clone();
            st.shift.value = s.clone();
            let (o, _) = batchnorm_train(&input, &mut st).unwrap();
            o.data().iter().zip(grad_out.data()).map(|(a, b)| a * b).sum()
        };
        check_gradients(&state.shift.value, &grads_state.shift.grad, loss_of_shift, 1e-3, 1e-4);
    }
}
