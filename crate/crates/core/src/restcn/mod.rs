//! The Res-TCN classifier: first convolution, nine residual units in three
//! blocks, global average pooling and a softmax head. Supports per-layer
//! activation recording for diagnosis.

pub mod stack;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::init::{he_normal, mix_seed, seeded_rng};
use crate::ops::{
    dense_softmax_xent, dense_softmax_xent_backward, global_average_pool,
    global_average_pool_backward,
};
use crate::optim::{sgd_step, ParamKind, Parameter, PlateauScheduler, SGDConfig};
use crate::tensor::Tensor;
pub use stack::{Stack, StackCache, NUM_LAYERS};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ResTCNConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Filter counts of Blocks A, B, C (layers 1-4, 5-7, 8-10).
    pub block_channels: [usize; 3],
    /// Temporal length of the first-layer filters; must be even so the two
    /// innermost time steps are well defined.
    pub first_filter_len: usize,
    /// Temporal length of every residual-unit filter.
    pub unit_filter_len: usize,
    pub dropout_p: f64,
    /// Stride-2 downsampling at the block entries (layers 5 and 8). Off
    /// only for toy configurations that exercise the residual identity.
    #[serde(default = "default_true")]
    pub downsample: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ResTCNConfig {
    fn default() -> ResTCNConfig {
        ResTCNConfig {
            input_dim: 120,
            num_classes: 60,
            block_channels: [64, 128, 256],
            first_filter_len: 8,
            unit_filter_len: 8,
            dropout_p: 0.5,
            downsample: true,
        }
    }
}

impl ResTCNConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("input_dim and num_classes must be positive".into()));
        }
        if self.block_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("block channel counts must be positive".into()));
        }
        if self.first_filter_len == 0 || self.first_filter_len % 2 != 0 {
            return Err(Error::Config(format!(
                "first_filter_len must be even and positive, got {}",
                self.first_filter_len
            )));
        }
        if self.unit_filter_len == 0 {
            return Err(Error::Config("unit_filter_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }

    /// Filter count of layer l (1..=10).
    pub fn layer_channels(&self, l: usize) -> usize {
        match l {
            1..=4 => self.block_channels[0],
            5..=7 => self.block_channels[1],
            8..=10 => self.block_channels[2],
            _ => panic!("layer {l} out of range"),
        }
    }

    /// Temporal stride applied by layer l. Only the block-entry units 5 and
    /// 8 downsample.
    pub fn layer_stride(&self, l: usize) -> usize {
        if self.downsample && (l == 5 || l == 8) {
            2
        } else {
            1
        }
    }

    /// Temporal extent of X_l for an input of length t.
    pub fn layer_extent(&self, t: usize, l: usize) -> usize {
        if !self.downsample {
            assert!((1..=10).contains(&l), "layer {l} out of range");
            return t;
        }
        match l {
            1..=4 => t,
            5..=7 => t.div_ceil(2),
            8..=10 => t.div_ceil(2).div_ceil(2),
            _ => panic!("layer {l} out of range"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseHead {
    pub weights: Parameter,
    pub bias: Parameter,
}

impl DenseHead {
    pub fn build(in_dim: usize, num_classes: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DenseHead {
        DenseHead {
            weights: Parameter::new(
                "head.weights".into(),
                he_normal(rng, &[in_dim, num_classes], in_dim),
                ParamKind::DenseWeight,
            ),
            bias: Parameter::new("head.bias".into(), Tensor::zeros(&[num_classes]), ParamKind::DenseBias),
        }
    }

    pub fn logits(&self, pooled: &Tensor) -> Result<Tensor> {
        let (b, c) = (pooled.shape()[0], pooled.shape()[1]);
        let k = self.bias.value.shape()[0];
        if self.weights.value.shape()[0] != c {
            return Err(Error::Shape(format!(
                "head expects {} pooled channels, got {}",
                self.weights.value.shape()[0],
                c
            )));
        }
        let mut out = Tensor::zeros(&[b, k]);
        for bi in 0..b {
            for ki in 0..k {
                let mut acc = self.bias.value.data()[ki];
                for ci in 0..c {
                    acc += pooled.at2(bi, ci) * self.weights.value.at2(ci, ki);
                }
                out.data_mut()[bi * k + ki] = acc;
            }
        }
        Ok(out)
    }
}

/// All activations recorded for one sample during one forward pass.
#[derive(Debug, Clone)]
pub struct ActivationBundle {
    pub sample_id: String,
    /// The network input X0, T x D.
    pub input: Tensor,
    /// X1..X10 in layer order, each T_l x N_l.
    pub layers: Vec<Tensor>,
}

impl ActivationBundle {
    /// Activation map of layer l (1..=10).
    pub fn layer(&self, l: usize) -> Result<&Tensor> {
        if !(1..=NUM_LAYERS).contains(&l) {
            return Err(Error::Param(format!("layer must be in 1..=10, got {l}")));
        }
        Ok(&self.layers[l - 1])
    }

    /// Scales every recorded tensor (input included) by `a`.
    pub fn scaled(&self, a: f64) -> ActivationBundle {
        ActivationBundle {
            sample_id: self.sample_id.clone(),
            input: self.input.scale(a),
            layers: self.layers.iter().map(|t| t.scale(a)).collect(),
        }
    }
}

/// Slices sample `b` out of a B x T x C batch tensor.
pub fn slice_sample(batch: &Tensor, b: usize) -> Tensor {
    let (t, c) = (batch.shape()[1], batch.shape()[2]);
    let start = b * t * c;
    Tensor::from_vec(&[t, c], batch.data()[start..start + t * c].to_vec()).expect("slice length")
}

fn bundles_from_recorded(x0: &Tensor, recorded: Vec<Tensor>) -> Vec<ActivationBundle> {
    let b = x0.shape()[0];
    (0..b)
        .map(|bi| ActivationBundle {
            sample_id: format!("b{bi}"),
            input: slice_sample(x0, bi),
            layers: recorded.iter().map(|x| slice_sample(x, bi)).collect(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub bundles: Option<Vec<ActivationBundle>>,
}

pub struct TrainCache {
    stack: StackCache,
    pooled: Tensor,
    probs: Tensor,
    x_final_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ResTCNModel {
    pub config: ResTCNConfig,
    pub stack: Stack,
    pub head: DenseHead,
}

/// Builds a Res-TCN with deterministic He initialization for the seed.
pub fn build_restcn(config: &ResTCNConfig, seed: u64) -> Result<ResTCNModel> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let stack = Stack::build(config, "main", &mut rng);
    let head = DenseHead::build(config.block_channels[2], config.num_classes, &mut rng);
    Ok(ResTCNModel { config: config.clone(), stack, head })
}

impl ResTCNModel {
    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.stack.params_mut();
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.stack.params();
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

    /// Inference pass; never mutates the model.
    pub fn forward_eval(&self, batch: &Tensor, record: bool) -> Result<ForwardOutput> {
        let (x_final, recorded) = self.stack.forward_eval(batch, record)?;
        let pooled = global_average_pool(&x_final)?;
        let logits = self.head.logits(&pooled)?;
        Ok(ForwardOutput {
            logits,
            bundles: recorded.map(|r| bundles_from_recorded(batch, r)),
        })
    }

    /// Training pass: batch-stat batch norm, seeded dropout, running-stat
    /// updates. Returns the loss alongside the cache for `backward`.
    pub fn forward_train(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        dropout_seed: u64,
        record: bool,
    ) -> Result<(f64, ForwardOutput, TrainCache)> {
        let (x_final, stack_cache, recorded) = self.stack.forward_train(batch, dropout_seed, record)?;
        let pooled = global_average_pool(&x_final)?;
        let out = dense_softmax_xent(&pooled, &self.head.weights.value, &self.head.bias.value, labels)?;
        let cache = TrainCache {
            stack: stack_cache,
            pooled,
            probs: out.probs.clone(),
            x_final_shape: x_final.shape().to_vec(),
        };
        let fwd = ForwardOutput {
            logits: out.logits,
            bundles: recorded.map(|r| bundles_from_recorded(batch, r)),
        };
        Ok((out.loss, fwd, cache))
    }

    /// Accumulates gradients for the last `forward_train` call and returns
    /// the gradient w.r.t. the input batch.
    pub fn backward(&mut self, cache: &TrainCache, labels: &[usize]) -> Result<Tensor> {
        let (d_pooled, d_w, d_b) = dense_softmax_xent_backward(
            &cache.pooled,
            &self.head.weights.value,
            &cache.probs,
            labels,
        );
        self.head.weights.grad.add_assign(&d_w);
        self.head.bias.grad.add_assign(&d_b);
        let d_final = global_average_pool_backward(&cache.x_final_shape, &d_pooled);
        self.stack.backward(&cache.stack, &d_final)
    }

    /// Eval-mode loss and accuracy over a dataset.
    pub fn test_metrics(&self, data: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let n = data.len();
        for chunk in (0..n).collect::<Vec<_>>().chunks(batch_size.max(1)) {
            let (batch, labels) = data.stack(chunk)?;
            let (x_final, _) = self.stack.forward_eval(&batch, false)?;
            let pooled = global_average_pool(&x_final)?;
            let out = dense_softmax_xent(&pooled, &self.head.weights.value, &self.head.bias.value, &labels)?;
            loss_sum += out.loss * chunk.len() as f64;
            correct += count_correct(&out.probs, &labels);
        }
        Ok((loss_sum / n as f64, correct as f64 / n as f64))
    }

    /// Full evaluation with confusion counts; eval mode throughout.
    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        data.validate()?;
        let k = self.config.num_classes;
        let mut confusion = vec![vec![0usize; k]; k];
        for chunk in (0..data.len()).collect::<Vec<_>>().chunks(64) {
            let (batch, labels) = data.stack(chunk)?;
            let out = self.forward_eval(&batch, false)?;
            for (bi, &label) in labels.iter().enumerate() {
                confusion[label][argmax_row(&out.logits, bi)] += 1;
            }
        }
        Ok(Evaluation::from_confusion(confusion))
    }

    /// Trains with shuffled minibatches, the L1-aware SGD step and the
    /// plateau schedule on the test loss. Deterministic for a fixed seed
    /// under single-threaded execution.
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
        mut on_epoch: impl FnMut(&ResTCNModel, &EpochStats) -> Result<()>,
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
                let (loss, fwd, cache) = self.forward_train(&batch, &labels, dropout_seed, false)?;
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

/// Absolute per-filter response magnitudes |x_l^(i)(t)| over time.
pub fn response_trace(bundle: &ActivationBundle, layer: usize, filter_ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    let x = bundle.layer(layer)?;
    let (t, n) = (x.shape()[0], x.shape()[1]);
    let mut traces = Vec::with_capacity(filter_ids.len());
    for &id in filter_ids {
        if id >= n {
            return Err(Error::Param(format!("filter {id} out of range for layer {layer} with {n} filters")));
        }
        traces.push((0..t).map(|ti| x.at2(ti, id).abs()).collect());
    }
    Ok(traces)
}

fn argmax_row(logits: &Tensor, row: usize) -> usize {
    let k = logits.shape()[1];
    let mut best = 0;
    for ki in 1..k {
        if logits.at2(row, ki) > logits.at2(row, best) {
            best = ki;
        }
    }
    best
}

fn count_correct(scores: &Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(bi, &label)| argmax_row(scores, bi) == label)
        .count()
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Per-class accuracy; None for classes absent from the dataset.
    pub per_class: Vec<Option<f64>>,
    /// confusion[true][predicted] sample counts.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Evaluation {
        let k = confusion.len();
        let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
        let diag: usize = (0..k).map(|i| confusion[i][i]).sum();
        let per_class = (0..k)
            .map(|i| {
                let row: usize = confusion[i].iter().sum();
                (row > 0).then(|| confusion[i][i] as f64 / row as f64)
            })
            .collect();
        Evaluation {
            accuracy: if total > 0 { diag as f64 / total as f64 } else { 0.0 },
            per_class,
            confusion,
        }
    }
}
