//! The shared convolutional stack: one plain first convolution followed by
//! nine residual units in three blocks. Units 5 and 8 widen the channels,
//! downsample time by 2 and carry an identity-path convolution.

use crate::error::{Error, Result};
use crate::init::{he_normal, mix_seed};
use crate::ops::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv1d_backward, conv1d_forward,
    dropout_backward, dropout_forward, relu_backward, relu_forward, BatchNormCache,
    BatchNormState, Mode, Padding,
};
use crate::optim::{ParamKind, Parameter};
use crate::restcn::ResTCNConfig;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

pub const NUM_LAYERS: usize = 10;

#[derive(Debug, Clone)]
pub struct ResidualUnit {
    /// Layer index in 2..=10.
    pub layer: usize,
    pub stride: usize,
    pub bn: BatchNormState,
    pub conv: Parameter,
    /// Identity-path conv of temporal length 1, present iff the channel
    /// count changes (layers 5 and 8).
    pub shortcut: Option<Parameter>,
}

#[derive(Debug, Clone)]
pub struct Stack {
    pub conv1: Parameter,
    pub units: Vec<ResidualUnit>,
    pub dropout_p: f64,
}

/// Per-unit intermediates kept for the backward pass.
pub struct UnitCache {
    pub x_prev: Tensor,
    pub bn_cache: BatchNormCache,
    pub relu_out: Tensor,
    pub dropout_mask: Option<Tensor>,
    pub sigma_out: Tensor,
}

pub struct StackCache {
    pub x0: Tensor,
    pub x1: Tensor,
    pub units: Vec<UnitCache>,
}

impl Stack {
    /// Builds a stack with He-initialized convolutions. `name` prefixes the
    /// parameter names so two stacks can coexist in one model.
    pub fn build(config: &ResTCNConfig, name: &str, rng: &mut ChaCha8Rng) -> Stack {
        let d = config.input_dim;
        let c1 = config.block_channels[0];
        let f1 = config.first_filter_len;
        let f = config.unit_filter_len;

        let conv1 = Parameter::new(
            format!("{name}.conv1"),
            he_normal(rng, &[c1, f1, d], f1 * d),
            ParamKind::Conv,
        );

        let mut units = Vec::with_capacity(NUM_LAYERS - 1);
        for layer in 2..=NUM_LAYERS {
            let n_in = config.layer_channels(layer - 1);
            let n_out = config.layer_channels(layer);
            let stride = config.layer_stride(layer);
            let conv = Parameter::new(
                format!("{name}.unit{layer}.conv"),
                he_normal(rng, &[n_out, f, n_in], f * n_in),
                ParamKind::Conv,
            );
            // The identity path needs a conv wherever the shape changes:
            // channel widening or temporal downsampling.
            let shortcut = (n_in != n_out || stride != 1).then(|| {
                Parameter::new(
                    format!("{name}.unit{layer}.shortcut"),
                    he_normal(rng, &[n_out, 1, n_in], n_in),
                    ParamKind::Conv,
                )
            });
            units.push(ResidualUnit {
                layer,
                stride,
                bn: BatchNormState::new(&format!("{name}.unit{layer}.bn"), n_in),
                conv,
                shortcut,
            });
        }

        Stack { conv1, units, dropout_p: config.dropout_p }
    }

    pub fn unit(&self, layer: usize) -> &ResidualUnit {
        &self.units[layer - 2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.conv1];
        for u in &mut self.units {
            out.push(&mut u.bn.scale);
            out.push(&mut u.bn.shift);
            out.push(&mut u.conv);
            if let Some(s) = &mut u.shortcut {
                out.push(s);
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.conv1];
        for u in &self.units {
            out.push(&u.bn.scale);
            out.push(&u.bn.shift);
            out.push(&u.conv);
            if let Some(s) = &u.shortcut {
                out.push(s);
            }
        }
        out
    }

    pub fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != 3 {
            return Err(Error::Data(format!("batch must be B x T x D, got {:?}", batch.shape())));
        }
        let d = self.conv1.value.shape()[2];
        if batch.shape()[2] != d {
            return Err(Error::Data(format!(
                "batch feature width {} does not match model input dim {}",
                batch.shape()[2],
                d
            )));
        }
        let f1 = self.conv1.value.shape()[1];
        if batch.shape()[1] < f1 {
            return Err(Error::Data(format!(
                "sequence length {} is shorter than the first filter length {}",
                batch.shape()[1],
                f1
            )));
        }
        Ok(())
    }

    /// Layer 1: plain convolution, no normalization or activation around it.
    pub fn layer1_eval(&self, x0: &Tensor) -> Result<Tensor> {
        conv1d_forward(x0, &self.conv1.value, 1, Padding::Same)
    }

    /// One residual unit in eval mode. `pipe_term`, when given, is added to
    /// the merge exactly like the residual branch.
    pub fn unit_eval(&self, layer: usize, x_prev: &Tensor, pipe_term: Option<&Tensor>) -> Result<Tensor> {
        let unit = self.unit(layer);
        let h = batchnorm_eval(x_prev, &unit.bn)?;
        let h = relu_forward(&h);
        let branch = conv1d_forward(&h, &unit.conv.value, unit.stride, Padding::Same)?;
        let identity = match &unit.shortcut {
            Some(s) => conv1d_forward(x_prev, &s.value, unit.stride, Padding::Same)?,
            None => x_prev.clone(),
        };
        let mut x = identity.add(&branch)?;
        if let Some(p) = pipe_term {
            x = x.add(p)?;
        }
        Ok(x)
    }

    /// One residual unit in train mode: BN -> ReLU -> dropout -> conv on the
    /// residual branch, identity (or strided 1-conv) on the shortcut.
    pub fn unit_train(
        &mut self,
        layer: usize,
        x_prev: &Tensor,
        pipe_term: Option<&Tensor>,
        dropout_seed: u64,
    ) -> Result<(Tensor, UnitCache)> {
        let p = self.dropout_p;
        let unit = &mut self.units[layer - 2];
        let (h, bn_cache) = batchnorm_train(x_prev, &mut unit.bn)?;
        let relu_out = relu_forward(&h);
        let (sigma_out, dropout_mask) =
            dropout_forward(&relu_out, p, Mode::Train, mix_seed(dropout_seed, layer as u64))?;
        let branch = conv1d_forward(&sigma_out, &unit.conv.value, unit.stride, Padding::Same)?;
        let identity = match &unit.shortcut {
            Some(s) => conv1d_forward(x_prev, &s.value, unit.stride, Padding::Same)?,
            None => x_prev.clone(),
        };
        let mut x = identity.add(&branch)?;
        if let Some(pt) = pipe_term {
            x = x.add(pt)?;
        }
        let cache = UnitCache {
            x_prev: x_prev.clone(),
            bn_cache,
            relu_out,
            dropout_mask,
            sigma_out,
        };
        Ok((x, cache))
    }

    /// Backward through one residual unit. Accumulates parameter gradients
    /// and returns the gradient w.r.t. the unit input. The pipe term is an
    /// additive merge input, so its gradient is `grad_out` itself and is
    /// handled by the caller.
    pub fn unit_backward(&mut self, layer: usize, cache: &UnitCache, grad_out: &Tensor) -> Result<Tensor> {
        let unit = &mut self.units[layer - 2];

        // Residual branch: conv <- dropout <- relu <- bn.
        let (d_sigma, d_conv) = conv1d_backward(
            &cache.sigma_out,
            &unit.conv.value,
            unit.stride,
            Padding::Same,
            grad_out,
        )?;
        unit.conv.grad.add_assign(&d_conv);
        let d_relu = dropout_backward(&d_sigma, cache.dropout_mask.as_ref());
        let d_bn_out = relu_backward(&cache.relu_out, &d_relu);
        let mut d_prev = batchnorm_backward(&d_bn_out, &cache.bn_cache, &mut unit.bn)?;

        // Identity path.
        match &mut unit.shortcut {
            Some(s) => {
                let (d_id, d_s) =
                    conv1d_backward(&cache.x_prev, &s.value, unit.stride, Padding::Same, grad_out)?;
                s.grad.add_assign(&d_s);
                d_prev.add_assign(&d_id);
            }
            None => d_prev.add_assign(grad_out),
        }
        Ok(d_prev)
    }

    /// Full eval-mode pass. Returns the final activation and, when asked,
    /// every layer's batch activation X1..X10.
    pub fn forward_eval(&self, x0: &Tensor, record: bool) -> Result<(Tensor, Option<Vec<Tensor>>)> {
        self.check_input(x0)?;
        let mut recorded = record.then(|| Vec::with_capacity(NUM_LAYERS));
        let mut x = self.layer1_eval(x0)?;
        if let Some(r) = recorded.as_mut() {
            r.push(x.clone());
        }
        for layer in 2..=NUM_LAYERS {
            x = self.unit_eval(layer, &x, None)?;
            if let Some(r) = recorded.as_mut() {
                r.push(x.clone());
            }
        }
        Ok((x, recorded))
    }

    /// Full train-mode pass with caches for the backward sweep.
    pub fn forward_train(
        &mut self,
        x0: &Tensor,
        dropout_seed: u64,
        record: bool,
    ) -> Result<(Tensor, StackCache, Option<Vec<Tensor>>)> {
        self.check_input(x0)?;
        let mut recorded = record.then(|| Vec::with_capacity(NUM_LAYERS));
        let x1 = self.layer1_eval(x0)?;
        if let Some(r) = recorded.as_mut() {
            r.push(x1.clone());
        }
        let mut units = Vec::with_capacity(NUM_LAYERS - 1);
        let mut x = x1.clone();
        for layer in 2..=NUM_LAYERS {
            let (next, cache) = self.unit_train(layer, &x, None, dropout_seed)?;
            units.push(cache);
            x = next;
            if let Some(r) = recorded.as_mut() {
                r.push(x.clone());
            }
        }
        let cache = StackCache { x0: x0.clone(), x1, units };
        Ok((x, cache, recorded))
    }

    /// Backward through the whole stack, returning the gradient w.r.t. X0.
    pub fn backward(&mut self, cache: &StackCache, grad_final: &Tensor) -> Result<Tensor> {
        let mut d = grad_final.clone();
        for layer in (2..=NUM_LAYERS).rev() {
            d = self.unit_backward(layer, &cache.units[layer - 2], &d)?;
        }
        let (d_x0, d_w1) = conv1d_backward(&cache.x0, &self.conv1.value, 1, Padding::Same, &d)?;
        self.conv1.grad.add_assign(&d_w1);
        Ok(d_x0)
    }
}
