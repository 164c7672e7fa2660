use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Optimizer, SampleLog, StepReport};
use crate::autodiff::Tape;
use crate::data::{Example, Sentence};
use crate::error::{Error, Result};
use crate::model::graph::{Graph, ParamVars};
use crate::model::{sample_sequence, Gradients, SeqModel};
use crate::rewards::{BaseReward, Reward};
use crate::tensor::Matrix;

/// Risk `Σ_i Q_i · (−Δ_i)` of one source's sample set, with
/// `Q = softmax(α · log p(y_i | x))` renormalized over the set. When `into` is
/// given, `scale · ∇risk` is added to it.
pub fn mrt_risk(
    model: &SeqModel,
    source: &[usize],
    samples: &[Sentence],
    rewards: &[Reward],
    alpha: f64,
    into: Option<(&mut Gradients, f64)>,
) -> Result<f64> {
    if samples.is_empty() || samples.len() != rewards.len() {
        return Err(Error::Config(format!(
            "{} samples with {} rewards",
            samples.len(),
            rewards.len()
        )));
    }
    model.check_source(source)?;
    let v = model.vocab_size();
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, model);
    let mut graph = Graph::<ChaCha8Rng>::new(model, &vars, None);
    let memory = graph.encode(&mut tape, source);
    let mut log_probs = Vec::with_capacity(samples.len());
    for y in samples {
        if y.is_empty() || y.len() > model.config.max_len {
            return Err(Error::DecodeLength {
                len: y.len(),
                max_len: model.config.max_len,
            });
        }
        let logits = graph.decode(&mut tape, memory, y);
        let lp = tape.log_softmax(logits);
        let mut onehot = Matrix::zeros(y.len(), v);
        for (t, &tok) in y.iter().enumerate() {
            onehot.set(t, tok, 1.0);
        }
        log_probs.push(tape.weighted_sum(lp, onehot));
    }
    let row = tape.concat_cols(&log_probs);
    let sharpened = tape.scale(row, alpha);
    let q = tape.softmax(sharpened);
    let neg = Matrix::row_vector(rewards.iter().map(|r| -r).collect());
    let risk = tape.weighted_sum(q, neg);
    let value = tape.scalar(risk);
    if let Some((grads, scale)) = into {
        let mut g = tape.backward(risk);
        grads.absorb(&mut g, &vars, scale);
    }
    Ok(value)
}

/// Draws `n_samples` outputs at τ = 1 and drops duplicates. The reference is
/// never added to the set, but a sample equal to it stays.
pub fn mrt_sample_set<R: Rng>(
    model: &SeqModel,
    ex: &Example,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Sentence>> {
    let mut seen = HashSet::new();
    let mut set = Vec::new();
    for _ in 0..n_samples {
        let y = sample_sequence(model, &ex.source, 1.0, model.config.max_len, rng)?.tokens;
        if seen.insert(y.clone()) {
            set.push(y);
        }
    }
    Ok(set)
}

/// One minimum-risk descent step. The risk is averaged over the sources of
/// the batch.
pub fn mrt_step<R: Rng>(
    model: &mut SeqModel,
    batch: &[&Example],
    n_samples: usize,
    alpha: f64,
    reward: BaseReward,
    opt: &mut Optimizer,
    log_samples: usize,
    rng: &mut R,
) -> Result<StepReport> {
    if n_samples < 2 {
        return Err(Error::Config(format!("minimum risk training needs >= 2 samples, got {n_samples}")));
    }
    let mut sets = Vec::with_capacity(batch.len());
    for ex in batch {
        let set = mrt_sample_set(model, ex, n_samples, rng)?;
        let rewards: Vec<Reward> = set
            .iter()
            .map(|y| reward.score(strip_eos(y), &ex.reference))
            .collect();
        sets.push((set, rewards));
    }
    let active = sets.iter().filter(|(s, _)| !s.is_empty()).count();
    let mut grads = Gradients::zeros_like(model);
    let mut risk = 0.0;
    for (ex, (set, rewards)) in batch.iter().zip(&sets) {
        if set.is_empty() {
            continue;
        }
        risk += mrt_risk(model, &ex.source, set, rewards, alpha, Some((&mut grads, 1.0 / active as f64)))?;
    }
    let finite = grads.all_finite();
    if finite && active > 0 {
        opt.descend(model, &grads);
    } else if !finite {
        log::warn!("non-finite risk gradient at step {}; update skipped", model.step_count + 1);
    }
    model.step_count += 1;
    let all_rewards: Vec<Reward> = sets.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    let firsts: Vec<Sentence> = sets.iter().map(|(s, _)| s.first().cloned().unwrap_or_default()).collect();
    let first_rewards: Vec<Reward> = sets.iter().map(|(_, r)| r.first().copied().unwrap_or(0.0)).collect();
    Ok(StepReport {
        step: model.step_count,
        mean_reward: all_rewards.iter().sum::<f64>() / all_rewards.len().max(1) as f64,
        loss: risk / active.max(1) as f64,
        grad_norm: grads.l2_norm(),
        tokens: sets.iter().flat_map(|(s, _)| s.iter().map(Vec::len)).sum(),
        skipped: !finite,
        samples_logged: SampleLog::collect(batch, &firsts, &first_rewards, log_samples),
    })
}

fn strip_eos(y: &[usize]) -> &[usize] {
    match y.iter().position(|&t| t == crate::data::EOS) {
        Some(i) => &y[..i],
        None => y,
    }
}
