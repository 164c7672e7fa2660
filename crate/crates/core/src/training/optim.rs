use serde::{Deserialize, Serialize};

use crate::model::{Gradients, SeqModel};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Plain gradient steps or Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// One step that decreases an objective whose gradient is `grads`.
    pub fn descend(&mut self, model: &mut SeqModel, grads: &Gradients) {
        self.update(model, grads, -1.0);
    }

    /// One step that increases an objective whose gradient is `grads`.
    pub fn ascend(&mut self, model: &mut SeqModel, grads: &Gradients) {
        self.update(model, grads, 1.0);
    }

    fn update(&mut self, model: &mut SeqModel, grads: &Gradients, sign: f64) {
        if self.lr == 0.0 {
            return;
        }
        match self.kind {
            OptimizerKind::Sgd => model.apply_update(grads, sign * self.lr),
            OptimizerKind::Adam => self.adam_update(model, grads, sign),
        }
    }

    fn adam_update(&mut self, model: &mut SeqModel, grads: &Gradients, sign: f64) {
        if self.m.is_empty() {
            self.m = grads.0.iter().map(|g| Matrix::zeros(g.rows, g.cols)).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = sign * self.lr;
        for (((p, g), m), v) in model
            .params
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] += step * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` evaluations
/// without improvement of a higher-is-better metric.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            min_lr,
            best: f64::NEG_INFINITY,
            bad: 0,
        }
    }

    /// Records a metric; returns whether it is a new best.
    pub fn observe(&mut self, metric: f64, opt: &mut Optimizer) -> bool {
        if metric > self.best {
            self.best = metric;
            self.bad = 0;
            return true;
        }
        self.bad += 1;
        if self.bad > self.patience {
            let lr = (opt.learning_rate() * self.factor).max(self.min_lr);
            opt.set_learning_rate(lr);
            self.bad = 0;
        }
        false
    }
}
