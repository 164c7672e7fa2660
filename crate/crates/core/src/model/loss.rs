use rand_chacha::ChaCha8Rng;

use super::graph::{self, Dropout, ParamVars};
use super::SeqModel;
use crate::autodiff::{Grads, Tape};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-parameter gradients, index-aligned with `SeqModel::params`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Matrix>);

impl Gradients {
    pub fn zeros_like(model: &SeqModel) -> Self {
        Gradients(
            model
                .params
                .iter()
                .map(|p| Matrix::zeros(p.rows, p.cols))
                .collect(),
        )
    }

    /// Adds the parameter gradients held in `grads` (scaled by `scale`).
    pub(crate) fn absorb(&mut self, grads: &mut Grads, vars: &ParamVars, scale: f64) {
        for (acc, &v) in self.0.iter_mut().zip(&vars.0) {
            if let Some(g) = grads.take(v) {
                if scale == 1.0 {
                    acc.add_assign(&g);
                } else {
                    for (a, b) in acc.data.iter_mut().zip(&g.data) {
                        *a += scale * b;
                    }
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.0 {
            m.scale_assign(s);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|m| m.data.iter().copied()).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|m| m.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|m| m.data.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Matrix::all_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|m| m.data.iter().all(|&v| v == 0.0))
    }
}

/// Token-normalized label-smoothed cross-entropy and its gradients.
///
/// Each target position (EOS included) contributes
/// `-(1-ε)·log p(gold) - (ε/|V|)·Σ_j log p(j)`; the sum is divided by the
/// number of target positions. Dropout is active when `dropout_rng` is given.
pub fn ce_loss_and_grads(
    model: &SeqModel,
    batch: &[&Example],
    label_smoothing: f64,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let v = model.vocab_size();
    let tokens: usize = batch.iter().map(|e| e.target_len()).sum();
    let norm = 1.0 / tokens as f64;
    let mut grads = Gradients::zeros_like(model);
    let mut total = 0.0;
    for ex in batch {
        let target = ex.target_with_eos();
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, model);
        let dropout = dropout_rng.as_deref_mut().map(|rng| Dropout {
            rate: model.config.dropout,
            rng,
        });
        let logits = graph::teacher_forced_logits(&mut tape, model, &vars, &ex.source, &target, dropout);
        let lp = tape.log_softmax(logits);
        let mut w = Matrix::filled(target.len(), v, -label_smoothing / v as f64);
        for (t, &gold) in target.iter().enumerate() {
            let cell = w.get(t, gold);
            w.set(t, gold, cell - (1.0 - label_smoothing));
        }
        let loss = tape.weighted_sum(lp, w);
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite cross-entropy {value}")));
        }
        total += value;
        let mut g = tape.backward(loss);
        grads.absorb(&mut g, &vars, norm);
    }
    Ok((total * norm, grads))
}

/// `log p_τ(tokens | source)` under teacher forcing. `tokens` are the
/// generated tokens, EOS included when emitted.
pub fn sequence_log_prob(model: &SeqModel, source: &[usize], tokens: &[usize], tau: f64) -> Result<f64> {
    score(model, source, tokens, tau, None)
}

/// Adds `weight · ∇ log p_τ(tokens | source)` to `into` and returns
/// `log p_τ`. A zero weight skips the backward pass.
pub fn sequence_log_prob_grad(
    model: &SeqModel,
    source: &[usize],
    tokens: &[usize],
    tau: f64,
    weight: f64,
    into: &mut Gradients,
) -> Result<f64> {
    score(model, source, tokens, tau, Some((weight, into)))
}

fn score(
    model: &SeqModel,
    source: &[usize],
    tokens: &[usize],
    tau: f64,
    grad: Option<(f64, &mut Gradients)>,
) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Config("cannot score an empty sequence".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    model.check_source(source)?;
    if tokens.len() > model.config.max_len {
        return Err(Error::DecodeLength {
            len: tokens.len(),
            max_len: model.config.max_len,
        });
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, model);
    let logits = graph::teacher_forced_logits::<ChaCha8Rng>(&mut tape, model, &vars, source, tokens, None);
    let lp = graph::tempered_log_probs(&mut tape, logits, tau);
    let mut w = Matrix::zeros(tokens.len(), model.vocab_size());
    for (t, &tok) in tokens.iter().enumerate() {
        w.set(t, tok, 1.0);
    }
    let total = tape.weighted_sum(lp, w);
    let value = tape.scalar(total);
    if let Some((weight, into)) = grad {
        if weight != 0.0 {
            let mut g = tape.backward(total);
            into.absorb(&mut g, &vars, weight);
        }
    }
    Ok(value)
}
