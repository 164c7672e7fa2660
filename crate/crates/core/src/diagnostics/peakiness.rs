use serde::{Deserialize, Serialize};

use super::gold_distributions;
use crate::data::EncodedCorpus;
use crate::error::{Error, Result};
use crate::model::SeqModel;

/// Mean per-position probability statistics under teacher forcing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakinessStats {
    /// Mass of the 10 most likely tokens.
    pub p_top10: f64,
    /// Probability of the most likely token.
    pub p_mode: f64,
    /// Probability of the gold token.
    pub p_gold: f64,
}

pub fn peakiness(model: &SeqModel, dev: &EncodedCorpus, tau: f64) -> Result<PeakinessStats> {
    if dev.is_empty() {
        return Err(Error::Config("peakiness needs a nonempty dev set".into()));
    }
    let (mut top10, mut mode, mut gold) = (0.0, 0.0, 0.0);
    let mut positions = 0usize;
    for ex in &dev.examples {
        let target = ex.target_with_eos();
        for (probs, &g) in gold_distributions(model, ex, tau)?.iter().zip(&target) {
            let mut sorted = probs.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            top10 += sorted.iter().take(10).sum::<f64>();
            mode += sorted[0];
            gold += probs[g];
            positions += 1;
        }
    }
    let n = positions as f64;
    Ok(PeakinessStats {
        p_top10: top10 / n,
        p_mode: mode / n,
        p_gold: gold / n,
    })
}

/// Percent changes per component; `None` where the before value is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakinessChange {
    pub p_top10: Option<f64>,
    pub p_mode: Option<f64>,
    pub p_gold: Option<f64>,
}

fn percent(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| 100.0 * (after - before) / before)
}

pub fn relative_change(before: &PeakinessStats, after: &PeakinessStats) -> PeakinessChange {
    PeakinessChange {
        p_top10: percent(before.p_top10, after.p_top10),
        p_mode: percent(before.p_mode, after.p_mode),
        p_gold: percent(before.p_gold, after.p_gold),
    }
}
