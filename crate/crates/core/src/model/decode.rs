//! Tempered sampling, greedy decoding and length-normalized beam search.

use std::cmp::Ordering;

use rand::Rng;

use super::infer::{self, DecoderState};
use super::SeqModel;
use crate::data::{Sentence, BOS, EOS};
use crate::error::{Error, Result};
use crate::tensor;

/// A decoded output. `tokens` ends in EOS unless decoding hit `max_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Sentence,
    /// Sum of natural-log token probabilities.
    pub log_prob: f64,
    /// `log_prob` divided by the number of generated tokens.
    pub normalized: f64,
}

impl Hypothesis {
    fn new(tokens: Sentence, log_prob: f64) -> Self {
        let normalized = if tokens.is_empty() {
            0.0
        } else {
            log_prob / tokens.len() as f64
        };
        Hypothesis {
            tokens,
            log_prob,
            normalized,
        }
    }

    /// Tokens before EOS.
    pub fn content(&self) -> &[usize] {
        match self.tokens.iter().position(|&t| t == EOS) {
            Some(i) => &self.tokens[..i],
            None => &self.tokens,
        }
    }

    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

/// `exp(z_i/τ) / Σ_j exp(z_j/τ)`, computed with max subtraction.
/// Logits are multiplied by `1/τ`; at `τ = 1` they are used unchanged.
pub fn tempered_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let mut p = scaled(logits, tau);
    tensor::softmax_in_place(&mut p);
    Ok(p)
}

pub fn tempered_log_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(tensor::log_softmax(&scaled(logits, tau)))
}

fn scaled(logits: &[f64], tau: f64) -> Vec<f64> {
    if tau == 1.0 {
        logits.to_vec()
    } else {
        let inv = 1.0 / tau;
        logits.iter().map(|z| z * inv).collect()
    }
}

fn check_max_len(model: &SeqModel, max_len: usize) -> Result<()> {
    if max_len == 0 || max_len > model.config.max_len {
        return Err(Error::DecodeLength {
            len: max_len,
            max_len: model.config.max_len,
        });
    }
    Ok(())
}

/// Next-token logits after `BOS + prefix`.
pub fn forward_step(model: &SeqModel, source: &[usize], prefix: &[usize]) -> Result<Vec<f64>> {
    model.check_source(source)?;
    if prefix.len() >= model.config.max_len {
        return Err(Error::DecodeLength {
            len: prefix.len(),
            max_len: model.config.max_len,
        });
    }
    let enc = infer::encode(model, source);
    let mut state = infer::start(model);
    let mut logits = infer::step(model, &enc, &mut state, BOS);
    for &t in prefix {
        logits = infer::step(model, &enc, &mut state, t);
    }
    Ok(logits)
}

/// Lowest id wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Ancestral sampling from the τ-tempered distribution. `log_prob` sums the
/// tempered log-probabilities of the drawn tokens.
pub fn sample_sequence<R: Rng>(
    model: &SeqModel,
    source: &[usize],
    tau: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<Hypothesis> {
    check_tau(tau)?;
    check_max_len(model, max_len)?;
    model.check_source(source)?;
    let (enc, mut state, mut logits) = infer::begin(model, source);
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    loop {
        let lp = tempered_log_softmax(&logits, tau)?;
        let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let t = draw(&probs, rng);
        log_prob += lp[t];
        tokens.push(t);
        if t == EOS || tokens.len() == max_len {
            break;
        }
        logits = infer::step(model, &enc, &mut state, t);
    }
    Ok(Hypothesis::new(tokens, log_prob))
}

pub fn greedy_decode(model: &SeqModel, source: &[usize], max_len: usize) -> Result<Hypothesis> {
    check_max_len(model, max_len)?;
    model.check_source(source)?;
    let (enc, mut state, mut logits) = infer::begin(model, source);
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    loop {
        let lp = tensor::log_softmax(&logits);
        let t = argmax(&lp);
        log_prob += lp[t];
        tokens.push(t);
        if t == EOS || tokens.len() == max_len {
            break;
        }
        logits = infer::step(model, &enc, &mut state, t);
    }
    Ok(Hypothesis::new(tokens, log_prob))
}

struct Beam {
    tokens: Sentence,
    log_prob: f64,
    state: DecoderState,
    next: Vec<f64>,
}

/// Orders hypotheses by normalized score (descending), then by tokens.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.normalized
        .partial_cmp(&a.normalized)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search with `k` beams. Each step keeps the `k` best expansions by
/// cumulative log-probability (ties: earlier beam, then lower token id);
/// expansions ending in EOS leave the beam as finished hypotheses. Beams still
/// open at `max_len` are finished as they are. The result is the finished
/// hypothesis with the best length-normalized score.
pub fn beam_decode(model: &SeqModel, source: &[usize], k: usize, max_len: usize) -> Result<Hypothesis> {
    if k == 0 {
        return Err(Error::Config("beam size must be >= 1".into()));
    }
    check_max_len(model, max_len)?;
    model.check_source(source)?;
    let (enc, state, logits) = infer::begin(model, source);
    let mut alive = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
        state,
        next: tensor::log_softmax(&logits),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    while !alive.is_empty() {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(alive.len() * model.vocab_size());
        for (b, beam) in alive.iter().enumerate() {
            for (t, &lp) in beam.next.iter().enumerate() {
                candidates.push((beam.log_prob + lp, b, t));
            }
        }
        candidates.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        candidates.truncate(k);
        let mut next_alive = Vec::with_capacity(k);
        for (score, b, t) in candidates {
            let mut tokens = alive[b].tokens.clone();
            tokens.push(t);
            if t == EOS || tokens.len() == max_len {
                finished.push(Hypothesis::new(tokens, score));
                continue;
            }
            next_alive.push((b, t, tokens, score));
        }
        alive = next_alive
            .into_iter()
            .map(|(b, t, tokens, score)| {
                let mut state = alive[b].state.clone();
                let logits = infer::step(model, &enc, &mut state, t);
                Beam {
                    tokens,
                    log_prob: score,
                    state,
                    next: tensor::log_softmax(&logits),
                }
            })
            .collect();
    }
    finished.sort_by(rank);
    Ok(finished.into_iter().next().expect("beam search finishes at least one hypothesis"))
}
