//! MS-Res-TCN: the targeted-refinement architecture. A second
//! targeted-attention (TA) stream sees a masked copy of the input, and a
//! per-merge-layer Pipe convolution transfers representation between the
//! streams, alternating direction with layer parity: even layers feed the
//! main stream, odd layers feed the TA stream. The prediction head pools the
//! channel concatenation of both streams.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, DimLayout};
use crate::error::{Error, Result};
use crate::init::{he_normal, mix_seed, seeded_rng};
use crate::ops::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv1d_backward, conv1d_forward,
    dense_softmax_xent, dense_softmax_xent_backward, global_average_pool,
    global_average_pool_backward, relu_backward, relu_forward, BatchNormCache, BatchNormState,
    Padding,
};
use crate::optim::{sgd_step, ParamKind, Parameter, PlateauScheduler, SGDConfig};
use crate::restcn::stack::{Stack, UnitCache};
use crate::restcn::{
    ActivationBundle, DenseHead, EpochStats, FitReport, ForwardOutput, ResTCNConfig, NUM_LAYERS,
};
use crate::tensor::Tensor;

/// The input dimensions the TA stream keeps; everything else is zeroed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Strictly increasing, non-empty column indices in [0, D).
    pub kept_dims: Vec<usize>,
    /// Free-text provenance, e.g. which diagnosis run produced the mask.
    #[serde(default)]
    pub note: String,
}

impl MaskSpec {
    pub fn new(mut dims: Vec<usize>, note: &str) -> MaskSpec {
        dims.sort_unstable();
        dims.dedup();
        MaskSpec { kept_dims: dims, note: note.to_string() }
    }

    /// Keeps every dimension; degenerates the TA stream to a copy input.
    pub fn all(d: usize) -> MaskSpec {
        MaskSpec { kept_dims: (0..d).collect(), note: "all dimensions".into() }
    }

    /// Resolves joint names through the dataset layout and merges raw
    /// column indices.
    pub fn from_joints(layout: &DimLayout, joints: &[String], dims: &[usize], note: &str) -> Result<MaskSpec> {
        let mut kept = dims.to_vec();
        for name in joints {
            kept.extend(layout.dims_for_joint(name)?);
        }
        let spec = MaskSpec::new(kept, note);
        spec.validate(layout.width())?;
        Ok(spec)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.kept_dims.is_empty() {
            return Err(Error::Config("mask keeps no dimensions".into()));
        }
        if !self.kept_dims.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("mask dimensions must be strictly increasing".into()));
        }
        if *self.kept_dims.last().unwrap() >= d {
            return Err(Error::Config(format!(
                "mask index {} out of range for {} input dimensions",
                self.kept_dims.last().unwrap(),
                d
            )));
        }
        Ok(())
    }
}

/// Copies the kept columns and zeroes the rest; shape is preserved.
pub fn mask_input(batch: &Tensor, mask: &MaskSpec) -> Result<Tensor> {
    if batch.rank() != 3 {
        return Err(Error::Shape(format!("mask_input expects B x T x D, got {:?}", batch.shape())));
    }
    let d = batch.shape()[2];
    mask.validate(d)?;
    let mut keep = vec![false; d];
    for &i in &mask.kept_dims {
        keep[i] = true;
    }
    let mut out = Tensor::zeros(batch.shape());
    let rows = batch.len() / d;
    for r in 0..rows {
        for c in 0..d {
            if keep[c] {
                out.data_mut()[r * d + c] = batch.data()[r * d + c];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipeSigma {
    /// Plain ReLU after the pipe convolution.
    ReluOnly,
    /// Batch normalization then ReLU, matching the residual units' sigma.
    BnRelu,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MSResTCNConfig {
    pub base: ResTCNConfig,
    pub pipe_filter_len: usize,
    pub pipe_sigma: PipeSigma,
    pub mask: MaskSpec,
}

impl MSResTCNConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.pipe_filter_len == 0 {
            return Err(Error::Config("pipe_filter_len must be positive".into()));
        }
        self.mask.validate(self.base.input_dim)
    }
}

/// One inter-stream link at a merge layer.
#[derive(Debug, Clone)]
pub struct Pipe {
    pub layer: usize,
    pub conv: Parameter,
    pub bn: Option<BatchNormState>,
}

struct PipeCache {
    src: Tensor,
    bn_cache: Option<BatchNormCache>,
    relu_in: Tensor,
}

impl Pipe {
    /// Pipes at even layers write into the main stream; odd into the TA
    /// stream. Layer 1 has no merge and therefore no pipe.
    pub fn feeds_main(layer: usize) -> bool {
        layer % 2 == 0
    }

    fn forward_eval(&self, src: &Tensor) -> Result<Tensor> {
        let y = conv1d_forward(src, &self.conv.value, 1, Padding::Same)?;
        let y = match &self.bn {
            Some(bn) => batchnorm_eval(&y, bn)?,
            None => y,
        };
        Ok(relu_forward(&y))
    }

    fn forward_train(&mut self, src: &Tensor) -> Result<(Tensor, PipeCache)> {
        let y = conv1d_forward(src, &self.conv.value, 1, Padding::Same)?;
        let (relu_in, bn_cache) = match &mut self.bn {
            Some(bn) => {
                let (z, cache) = batchnorm_train(&y, bn)?;
                (z, Some(cache))
            }
            None => (y, None),
        };
        let out = relu_forward(&relu_in);
        Ok((out, PipeCache { src: src.clone(), bn_cache, relu_in }))
    }

    fn backward(&mut self, cache: &PipeCache, grad_out: &Tensor) -> Result<Tensor> {
        let d_relu_in = relu_backward(&cache.relu_in, grad_out);
        let d_conv_out = match (&mut self.bn, &cache.bn_cache) {
            (Some(bn), Some(bn_cache)) => batchnorm_backward(&d_relu_in, bn_cache, bn)?,
            _ => d_relu_in,
        };
        let (d_src, d_w) =
            conv1d_backward(&cache.src, &self.conv.value, 1, Padding::Same, &d_conv_out)?;
        self.conv.grad.add_assign(&d_w);
        Ok(d_src)
    }
}

/// Recorded activations of both streams for one batch.
#[derive(Debug, Clone)]
pub struct MsBundles {
    pub main: Vec<ActivationBundle>,
    pub ta: Vec<ActivationBundle>,
}

#[derive(Debug, Clone)]
pub struct MsForwardOutput {
    pub logits: Tensor,
    pub bundles: Option<MsBundles>,
}

pub struct MsTrainCache {
    x0_main: Tensor,
    x0_ta: Tensor,
    main_units: Vec<UnitCache>,
    ta_units: Vec<UnitCache>,
    pipes: Vec<PipeCache>,
    pooled: Tensor,
    probs: Tensor,
    concat_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MSModel {
    pub config: MSResTCNConfig,
    pub main: Stack,
    pub ta: Stack,
    /// Pipes for layers 2..=10, indexed by layer - 2.
    pub pipes: Vec<Pipe>,
    pub head: DenseHead,
}

/// Builds an MS-Res-TCN: two identically shaped stacks, one pipe per merge
/// layer and a head over the concatenated stream channels.
pub fn build_ms(config: &MSResTCNConfig, seed: u64) -> Result<MSModel> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let main = Stack::build(&config.base, "main", &mut rng);
    let ta = Stack::build(&config.base, "ta", &mut rng);
    let pf = config.pipe_filter_len;
    let mut pipes = Vec::with_capacity(NUM_LAYERS - 1);
    for layer in 2..=NUM_LAYERS {
        let c = config.base.layer_channels(layer);
        let conv = Parameter::new(
            format!("pipe{layer}.conv"),
            he_normal(&mut rng, &[c, pf, c], pf * c),
            ParamKind::Conv,
        );
        let bn = matches!(config.pipe_sigma, PipeSigma::BnRelu)
            .then(|| BatchNormState::new(&format!("pipe{layer}.bn"), c));
        pipes.push(Pipe { layer, conv, bn });
    }
    let head = DenseHead::build(2 * config.base.block_channels[2], config.base.num_classes, &mut rng);
    Ok(MSModel { config: config.clone(), main, ta, pipes, head })
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (bt, t, ca) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let cb = b.shape()[2];
    debug_assert_eq!(&b.shape()[..2], &a.shape()[..2]);
    let mut out = Tensor::zeros(&[bt, t, ca + cb]);
    for bi in 0..bt {
        for ti in 0..t {
            for ci in 0..ca {
                let i = out.idx3(bi, ti, ci);
                out.data_mut()[i] = a.at3(bi, ti, ci);
            }
            for ci in 0..cb {
                let i = out.idx3(bi, ti, ca + ci);
                out.data_mut()[i] = b.at3(bi, ti, ci);
            }
        }
    }
    out
}

fn split_channels(grad: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let (bt, t, c) = (grad.shape()[0], grad.shape()[1], grad.shape()[2]);
    let cb = c - ca;
    let mut ga = Tensor::zeros(&[bt, t, ca]);
    let mut gb = Tensor::zeros(&[bt, t, cb]);
    for bi in 0..bt {
        for ti in 0..t {
            for ci in 0..ca {
                let i = ga.idx3(bi, ti, ci);
                ga.data_mut()[i] = grad.at3(bi, ti, ci);
            }
            for ci in 0..cb {
                let i = gb.idx3(bi, ti, ci);
                gb.data_mut()[i] = grad.at3(bi, ti, ca + ci);
            }
        }
    }
    (ga, gb)
}

fn bundles_of(x0: &Tensor, recorded: &[Tensor]) -> Vec<ActivationBundle> {
    let b = x0.shape()[0];
    (0..b)
        .map(|bi| ActivationBundle {
            sample_id: format!("b{bi}"),
            input: crate::restcn::slice_sample(x0, bi),
            layers: recorded.iter().map(|x| crate::restcn::slice_sample(x, bi)).collect(),
        })
        .collect()
}

impl MSModel {
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.main.params_mut();
        out.extend(self.ta.params_mut());
        for p in &mut self.pipes {
            out.push(&mut p.conv);
            if let Some(bn) = &mut p.bn {
                out.push(&mut bn.scale);
                out.push(&mut bn.shift);
            }
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.main.params();
        out.extend(self.ta.params());
        for p in &self.pipes {
            out.push(&p.conv);
            if let Some(bn) = &p.bn {
                out.push(&bn.scale);
                out.push(&bn.shift);
            }
        }
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn pipe_mut(&mut self, layer: usize) -> &mut Pipe {
        &mut self.pipes[layer - 2]
    }

    /// Eval-mode forward in the fixed per-layer order: at even layers the TA
    /// activation is computed first and piped into the main merge; at odd
    /// layers the main activation is computed first and piped into the TA
    /// merge.
    pub fn forward_eval(&self, batch: &Tensor, record: bool) -> Result<MsForwardOutput> {
        self.main.check_input(batch)?;
        let x0_ta = mask_input(batch, &self.config.mask)?;
        let mut rec_main = record.then(Vec::new);
        let mut rec_ta = record.then(Vec::new);

        let mut x_m = self.main.layer1_eval(batch)?;
        let mut x_t = self.ta.layer1_eval(&x0_ta)?;
        if let (Some(rm), Some(rt)) = (rec_main.as_mut(), rec_ta.as_mut()) {
            rm.push(x_m.clone());
            rt.push(x_t.clone());
        }
        for layer in 2..=NUM_LAYERS {
            let pipe = &self.pipes[layer - 2];
            if Pipe::feeds_main(layer) {
                x_t = self.ta.unit_eval(layer, &x_t, None)?;
                let p = pipe.forward_eval(&x_t)?;
                x_m = self.main.unit_eval(layer, &x_m, Some(&p))?;
            } else {
                x_m = self.main.unit_eval(layer, &x_m, None)?;
                let p = pipe.forward_eval(&x_m)?;
                x_t = self.ta.unit_eval(layer, &x_t, Some(&p))?;
            }
            if let (Some(rm), Some(rt)) = (rec_main.as_mut(), rec_ta.as_mut()) {
                rm.push(x_m.clone());
                rt.push(x_t.clone());
            }
        }

        let concat = concat_channels(&x_m, &x_t);
        let pooled = global_average_pool(&concat)?;
        let logits = self.head.logits(&pooled)?;
        let bundles = match (rec_main, rec_ta) {
            (Some(rm), Some(rt)) => Some(MsBundles {
                main: bundles_of(batch, &rm),
                ta: bundles_of(&x0_ta, &rt),
            }),
            _ => None,
        };
        Ok(MsForwardOutput { logits, bundles })
    }

    /// Train-mode forward; returns loss, logits and the cache for `backward`.
    pub fn forward_train(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<(f64, ForwardOutput, MsTrainCache)> {
        self.main.check_input(batch)?;
        let x0_ta = mask_input(batch, &self.config.mask)?;
        let seed_main = mix_seed(dropout_seed, 0x4D41);
        let seed_ta = mix_seed(dropout_seed, 0x5441);

        let mut main_units = Vec::with_capacity(NUM_LAYERS - 1);
        let mut ta_units = Vec::with_capacity(NUM_LAYERS - 1);
        let mut pipe_caches = Vec::with_capacity(NUM_LAYERS - 1);

        let mut x_m = self.main.layer1_eval(batch)?;
        let mut x_t = self.ta.layer1_eval(&x0_ta)?;
        for layer in 2..=NUM_LAYERS {
            if Pipe::feeds_main(layer) {
                let (t_next, t_cache) = self.ta.unit_train(layer, &x_t, None, seed_ta)?;
                x_t = t_next;
                let (p, p_cache) = self.pipe_mut(layer).forward_train(&x_t)?;
                let (m_next, m_cache) = self.main.unit_train(layer, &x_m, Some(&p), seed_main)?;
                x_m = m_next;
                main_units.push(m_cache);
                ta_units.push(t_cache);
                pipe_caches.push(p_cache);
            } else {
                let (m_next, m_cache) = self.main.unit_train(layer, &x_m, None, seed_main)?;
                x_m = m_next;
                let (p, p_cache) = self.pipe_mut(layer).forward_train(&x_m)?;
                let (t_next, t_cache) = self.ta.unit_train(layer, &x_t, Some(&p), seed_ta)?;
                x_t = t_next;
                main_units.push(m_cache);
                ta_units.push(t_cache);
                pipe_caches.push(p_cache);
            }
        }

        let concat = concat_channels(&x_m, &x_t);
        let pooled = global_average_pool(&concat)?;
        let out = dense_softmax_xent(&pooled, &self.head.weights.value, &self.head.bias.value, labels)?;
        let cache = MsTrainCache {
            x0_main: batch.clone(),
            x0_ta,
            main_units,
            ta_units,
            pipes: pipe_caches,
            pooled,
            probs: out.probs.clone(),
            concat_shape: concat.shape().to_vec(),
        };
        Ok((out.loss, ForwardOutput { logits: out.logits, bundles: None }, cache))
    }

    /// Backward in exact reverse of the forward order. Returns the gradient
    /// w.r.t. the unmasked input batch.
    pub fn backward(&mut self, cache: &MsTrainCache, labels: &[usize]) -> Result<Tensor> {
        let (d_pooled, d_w, d_b) = dense_softmax_xent_backward(
            &cache.pooled,
            &self.head.weights.value,
            &cache.probs,
            labels,
        );
        self.head.weights.grad.add_assign(&d_w);
        self.head.bias.grad.add_assign(&d_b);
        let d_concat = global_average_pool_backward(&cache.concat_shape, &d_pooled);
        let c_main = self.config.base.block_channels[2];
        let (mut d_m, mut d_t) = split_channels(&d_concat, c_main);

        for layer in (2..=NUM_LAYERS).rev() {
            let idx = layer - 2;
            if Pipe::feeds_main(layer) {
                // X_l merged the pipe from X'_l, so its gradient flows there.
                let d_pipe_src = self.pipe_mut(layer).backward(&cache.pipes[idx], &d_m)?;
                d_m = self.main.unit_backward(layer, &cache.main_units[idx], &d_m)?;
                d_t.add_assign(&d_pipe_src);
                d_t = self.ta.unit_backward(layer, &cache.ta_units[idx], &d_t)?;
            } else {
                let d_pipe_src = self.pipe_mut(layer).backward(&cache.pipes[idx], &d_t)?;
                d_t = self.ta.unit_backward(layer, &cache.ta_units[idx], &d_t)?;
                d_m.add_assign(&d_pipe_src);
                d_m = self.main.unit_backward(layer, &cache.main_units[idx], &d_m)?;
            }
        }

        let (d_x0_main, d_w1_main) =
            conv1d_backward(&cache.x0_main, &self.main.conv1.value, 1, Padding::Same, &d_m)?;
        self.main.conv1.grad.add_assign(&d_w1_main);
        let (d_x0_ta, d_w1_ta) =
            conv1d_backward(&cache.x0_ta, &self.ta.conv1.value, 1, Padding::Same, &d_t)?;
        self.ta.conv1.grad.add_assign(&d_w1_ta);

        // The mask is a fixed linear projection: only kept columns pass
        // gradient back to the original input.
        let mut d_x0 = d_x0_main;
        let d = d_x0.shape()[2];
        let mut keep = vec![false; d];
        for &i in &self.config.mask.kept_dims {
            keep[i] = true;
        }
        let rows = d_x0.len() / d;
        for r in 0..rows {
            for c in 0..d {
                if keep[c] {
                    d_x0.data_mut()[r * d + c] += d_x0_ta.data()[r * d + c];
                }
            }
        }
        Ok(d_x0)
    }

    /// Eval-mode loss and accuracy over a dataset.
    pub fn test_metrics(&self, data: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let n = data.len();
        for chunk in (0..n).collect::<Vec<_>>().chunks(batch_size.max(1)) {
            let (batch, labels) = data.stack(chunk)?;
            let out = self.forward_eval(&batch, false)?;
            let probs = dense_probs_from_logits(&out.logits);
            loss_sum += xent_from_probs(&probs, &labels) * chunk.len() as f64;
            correct += count_correct(&out.logits, &labels);
        }
        Ok((loss_sum / n as f64, correct as f64 / n as f64))
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<crate::restcn::Evaluation> {
        data.validate()?;
        let k = self.config.base.num_classes;
        let mut confusion = vec![vec![0usize; k]; k];
        for chunk in (0..data.len()).collect::<Vec<_>>().chunks(64) {
            let (batch, labels) = data.stack(chunk)?;
            let out = self.forward_eval(&batch, false)?;
            for (bi, &label) in labels.iter().enumerate() {
                confusion[label][argmax_row(&out.logits, bi)] += 1;
            }
        }
        Ok(crate::restcn::Evaluation::from_confusion(confusion))
    }

    /// Joint training of both streams and the pipes; the TA stream input is
    /// the masked batch, built inside the forward pass.
    pub fn fit(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        sgd: &SGDConfig,
        epochs: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<FitReport> {
        self.fit_with(train, test, sgd, epochs, batch_size, seed, |_, _| Ok(()))
    }

    /// `fit` with a per-epoch callback (checkpointing, logging).
    #[allow(clippy::too_many_arguments)]
    pub fn fit_with(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        sgd: &SGDConfig,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        mut on_epoch: impl FnMut(&MSModel, &EpochStats) -> Result<()>,
    ) -> Result<FitReport> {
        train.validate()?;
        test.validate()?;
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut rng = seeded_rng(mix_seed(seed, 0x5EED));
        let mut sched = PlateauScheduler::new(*sgd);
        let mut report = FitReport::default();
        let mut indices: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=epochs {
            let lr = sched.lr();
            indices.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for chunk in indices.chunks(batch_size) {
                let (batch, labels) = train.stack(chunk)?;
                let dropout_seed = rng.random::<u64>();
                self.zero_grads();
                let (loss, fwd, cache) = self.forward_train(&batch, &labels, dropout_seed)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
                }
                self.backward(&cache, &labels)?;
                sgd_step(&mut self.params_mut(), sgd, lr);
                loss_sum += loss * chunk.len() as f64;
                correct += count_correct(&fwd.logits, &labels);
            }
            let train_loss = loss_sum / train.len() as f64;
            let train_acc = correct as f64 / train.len() as f64;
            let (test_loss, test_acc) = self.test_metrics(test, batch_size)?;
            sched.observe(test_loss);
            let stats = EpochStats { epoch, train_loss, train_acc, test_loss, test_acc, lr };
            on_epoch(self, &stats)?;
            report.epochs.push(stats);
        }
        Ok(report)
    }
}

fn argmax_row(logits: &Tensor, row: usize) -> usize {
    let k = logits.shape()[1];
    (1..k).fold(0, |best, ki| if logits.at2(row, ki) > logits.at2(row, best) { ki } else { best })
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(bi, &label)| argmax_row(logits, bi) == label)
        .count()
}

fn dense_probs_from_logits(logits: &Tensor) -> Tensor {
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    let mut probs = Tensor::zeros(&[b, k]);
    for bi in 0..b {
        let row = &logits.data()[bi * k..(bi + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        for ki in 0..k {
            probs.data_mut()[bi * k + ki] = (row[ki] - max).exp() / denom;
        }
    }
    probs
}

fn xent_from_probs(probs: &Tensor, labels: &[usize]) -> f64 {
    let k = probs.shape()[1];
    let mut loss = 0.0;
    for (bi, &label) in labels.iter().enumerate() {
        loss -= probs.data()[bi * k + label].max(1e-300).ln();
    }
    loss / labels.len() as f64
}
