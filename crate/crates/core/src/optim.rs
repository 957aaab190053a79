//! Parameters, the SGD update and the plateau learning-rate rule.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// What a parameter parametrizes; decides whether the L1 term applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution filters, including identity-path and pipe convs. L1 applies.
    Conv,
    BnScale,
    BnShift,
    DenseWeight,
    DenseBias,
}

impl ParamKind {
    pub fn l1_applies(self) -> bool {
        matches!(self, ParamKind::Conv)
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
    pub kind: ParamKind,
}

impl Parameter {
    pub fn new(name: String, value: Tensor, kind: ParamKind) -> Parameter {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Parameter { name, value, grad, velocity, kind }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SGDConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l1_weight: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_delta: f64,
}

impl Default for SGDConfig {
    fn default() -> SGDConfig {
        SGDConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            l1_weight: 1e-4,
            plateau_patience: 5,
            plateau_factor: 0.1,
            min_delta: 1e-3,
        }
    }
}

/// One SGD step over `params` at learning rate `lr`.
///
/// Conv parameters get the L1 subgradient added (sign(0) = 0); momentum is
/// the accumulation v <- momentum * v + g, w <- w - lr * v.
pub fn sgd_step(params: &mut [&mut Parameter], cfg: &SGDConfig, lr: f64) {
    for p in params.iter_mut() {
        let l1 = if p.kind.l1_applies() { cfg.l1_weight } else { 0.0 };
        let n = p.value.len();
        for i in 0..n {
            let mut g = p.grad.data()[i];
            if l1 != 0.0 {
                g += l1 * sign(p.value.data()[i]);
            }
            let upd = if cfg.momentum != 0.0 {
                let v = cfg.momentum * p.velocity.data()[i] + g;
                p.velocity.data_mut()[i] = v;
                v
            } else {
                g
            };
            p.value.data_mut()[i] -= lr * upd;
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Decays the learning rate when the monitored loss stops improving.
///
/// An epoch counts as an improvement only when its loss beats the best seen
/// so far by more than `min_delta`; after `plateau_patience` consecutive
/// non-improvements the rate is multiplied by `plateau_factor` and the
/// counter resets.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    best: f64,
    wait: usize,
    cfg: SGDConfig,
}

impl PlateauScheduler {
    pub fn new(cfg: SGDConfig) -> PlateauScheduler {
        PlateauScheduler { lr: cfg.learning_rate, best: f64::INFINITY, wait: 0, cfg }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's monitored loss; returns the rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.cfg.min_delta {
            self.best = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.cfg.plateau_patience {
                self.lr *= self.cfg.plateau_factor;
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Replays a whole loss history through the plateau rule and returns the
/// resulting learning rate.
pub fn plateau_schedule(history: &[f64], cfg: &SGDConfig) -> f64 {
    let mut sched = PlateauScheduler::new(*cfg);
    for &loss in history {
        sched.observe(loss);
    }
    sched.lr()
}
