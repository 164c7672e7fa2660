use crate::data::{Sentence, EOS};
use crate::error::{Error, Result};
use crate::model::{sequence_log_prob, sequence_log_prob_grad, Gradients, SeqModel};
use crate::rewards::Reward;

/// Upper bound on `|V|^max_len` for exhaustive enumeration.
pub const ENUMERATION_LIMIT: u64 = 100_000;

/// Every output the decoder can produce within `max_len` tokens: sequences
/// that end at their first EOS, plus EOS-free sequences of exactly `max_len`.
pub fn enumerate_outputs(vocab: usize, max_len: usize) -> Result<Vec<Sentence>> {
    let size = (vocab as u64).checked_pow(max_len as u32);
    if !matches!(size, Some(s) if s <= ENUMERATION_LIMIT) {
        return Err(Error::Enumeration(format!(
            "{vocab}^{max_len} sequences exceed the limit of {ENUMERATION_LIMIT}"
        )));
    }
    let mut out = Vec::new();
    let mut open: Vec<Sentence> = vec![Vec::new()];
    for len in 1..=max_len {
        let mut next = Vec::new();
        for prefix in &open {
            for t in 0..vocab {
                let mut y = prefix.clone();
                y.push(t);
                if t == EOS || len == max_len {
                    out.push(y);
                } else {
                    next.push(y);
                }
            }
        }
        open = next;
    }
    Ok(out)
}

/// `Σ_y p_τ(y|x) · Δ(y, ref) · ∇ log p_τ(y|x)` over every output within
/// `max_len` tokens. `reward` receives the output without EOS and the
/// reference.
pub fn exact_pg_gradient(
    model: &SeqModel,
    source: &[usize],
    reference: &[usize],
    max_len: usize,
    tau: f64,
    reward: impl Fn(&[usize], &[usize]) -> Reward,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(model);
    for y in enumerate_outputs(model.vocab_size(), max_len)? {
        let content = y.strip_suffix(&[EOS]).unwrap_or(&y);
        let r = reward(content, reference);
        if r == 0.0 {
            continue;
        }
        let p = sequence_log_prob(model, source, &y, tau)?.exp();
        sequence_log_prob_grad(model, source, &y, tau, p * r, &mut grads)?;
    }
    Ok(grads)
}

/// `Σ_y p_τ(y|x) · Δ(y, ref)` over the same output space.
pub fn exact_expected_reward(
    model: &SeqModel,
    source: &[usize],
    reference: &[usize],
    max_len: usize,
    tau: f64,
    reward: impl Fn(&[usize], &[usize]) -> Reward,
) -> Result<f64> {
    let mut total = 0.0;
    for y in enumerate_outputs(model.vocab_size(), max_len)? {
        let content = y.strip_suffix(&[EOS]).unwrap_or(&y);
        total += sequence_log_prob(model, source, &y, tau)?.exp() * reward(content, reference);
    }
    Ok(total)
}
