//! Evaluation and analysis of trained models: corpus BLEU, peakiness of the
//! output distribution, gold-token rank histograms and beam-size sweeps.

mod metric;
mod peakiness;
mod ranks;

pub use metric::{beam_curve, corpus_metric, evaluate, translate, BeamCurve, Evaluation};
pub use peakiness::{peakiness, relative_change, PeakinessChange, PeakinessStats};
pub use ranks::{gold_rank, gold_rank_histogram, RankHistogram, RANK_BUCKETS};

use crate::data::Example;
use crate::error::Result;
use crate::model::{infer, tempered_softmax, SeqModel};

/// Teacher-forced next-token distributions for every target position of `ex`
/// (reference tokens followed by EOS).
pub(crate) fn gold_distributions(model: &SeqModel, ex: &Example, tau: f64) -> Result<Vec<Vec<f64>>> {
    let target = ex.target_with_eos();
    if target.len() > model.config.max_len {
        return Err(crate::Error::DecodeLength {
            len: target.len(),
            max_len: model.config.max_len,
        });
    }
    let (enc, mut state, mut logits) = infer::begin(model, &ex.source);
    let mut out = Vec::with_capacity(target.len());
    for (i, &t) in target.iter().enumerate() {
        out.push(tempered_softmax(&logits, tau)?);
        if i + 1 < target.len() {
            logits = infer::step(model, &enc, &mut state, t);
        }
    }
    Ok(out)
}
