use serde::{Deserialize, Serialize};

use crate::data::{EncodedCorpus, Sentence};
use crate::error::{Error, Result};
use crate::model::{beam_decode, greedy_decode, Hypothesis, SeqModel};
use crate::rewards::NgramStats;

const MAX_ORDER: usize = 4;

/// Corpus BLEU (0 to 100) with n-gram statistics pooled over all pairs.
///
/// Orders for which neither the hypotheses nor the references contain any
/// n-gram are left out of the geometric mean. No smoothing is applied.
pub fn corpus_metric(hyps: &[Sentence], refs: &[Sentence]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Config(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut stats = NgramStats::new(MAX_ORDER);
    for (h, r) in hyps.iter().zip(refs) {
        stats.add(h, r);
    }
    if stats.hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if stats.totals[n] == 0 && stats.ref_totals[n] == 0 {
            continue;
        }
        if stats.matches[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (stats.matches[n] as f64 / stats.totals[n] as f64).ln();
        orders += 1;
    }
    Ok(100.0 * (log_sum / orders as f64).exp() * stats.brevity_penalty())
}

/// Decodes every source with greedy search (`beam = 1`) or beam search.
pub fn translate(model: &SeqModel, corpus: &EncodedCorpus, beam: usize) -> Result<Vec<Hypothesis>> {
    let max_len = model.config.max_len;
    corpus
        .examples
        .iter()
        .map(|ex| {
            if beam == 1 {
                greedy_decode(model, &ex.source, max_len)
            } else {
                beam_decode(model, &ex.source, beam, max_len)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub bleu: f64,
    /// Fraction of outputs identical to their reference.
    pub accuracy: f64,
}

pub fn evaluate(model: &SeqModel, corpus: &EncodedCorpus, beam: usize) -> Result<Evaluation> {
    let hyps: Vec<Sentence> = translate(model, corpus, beam)?
        .iter()
        .map(|h| h.content().to_vec())
        .collect();
    let refs: Vec<Sentence> = corpus.examples.iter().map(|e| e.reference.clone()).collect();
    let exact = hyps.iter().zip(&refs).filter(|(h, r)| h == r).count();
    Ok(Evaluation {
        bleu: corpus_metric(&hyps, &refs)?,
        accuracy: exact as f64 / refs.len().max(1) as f64,
    })
}

/// Corpus BLEU at several beam sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamCurve {
    pub entries: Vec<(usize, f64)>,
}

impl BeamCurve {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == k).map(|e| e.1)
    }
}

pub fn beam_curve(model: &SeqModel, corpus: &EncodedCorpus, ks: &[usize]) -> Result<BeamCurve> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(Error::Config(format!(
            "beam sizes must be positive and strictly ascending, got {ks:?}"
        )));
    }
    let entries = ks
        .iter()
        .map(|&k| Ok((k, evaluate(model, corpus, k)?.bleu)))
        .collect::<Result<_>>()?;
    Ok(BeamCurve { entries })
}
