use serde::{Deserialize, Serialize};

use super::gold_distributions;
use crate::data::EncodedCorpus;
use crate::error::{Error, Result};
use crate::model::SeqModel;

/// Inclusive rank ranges; the last bucket is open-ended.
pub const RANK_BUCKETS: [(usize, usize); 6] = [
    (1, 1),
    (2, 2),
    (3, 5),
    (6, 10),
    (11, 100),
    (101, usize::MAX),
];

/// Gold-token rank: 1 + tokens with higher probability + equally probable
/// tokens with a lower id.
pub fn gold_rank(probs: &[f64], gold: usize) -> usize {
    let pg = probs[gold];
    1 + probs
        .iter()
        .enumerate()
        .filter(|&(j, &p)| p > pg || (p == pg && j < gold))
        .count()
}

fn bucket_of(rank: usize) -> usize {
    RANK_BUCKETS
        .iter()
        .position(|&(lo, hi)| rank >= lo && rank <= hi)
        .expect("rank buckets cover every positive rank")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub counts: [usize; 6],
    pub total: usize,
}

impl RankHistogram {
    pub fn label(bucket: usize) -> String {
        match RANK_BUCKETS[bucket] {
            (lo, hi) if lo == hi => lo.to_string(),
            (lo, usize::MAX) => format!("{lo}+"),
            (lo, hi) => format!("{lo}-{hi}"),
        }
    }

    pub fn fractions(&self) -> [f64; 6] {
        let n = self.total.max(1) as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// The highest bucket holding at least one gold token.
    pub fn worst_occupied(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }
}

pub fn gold_rank_histogram(model: &SeqModel, dev: &EncodedCorpus) -> Result<RankHistogram> {
    if dev.is_empty() {
        return Err(Error::Config("rank histogram needs a nonempty dev set".into()));
    }
    let mut h = RankHistogram::default();
    for ex in &dev.examples {
        let target = ex.target_with_eos();
        for (probs, &g) in gold_distributions(model, ex, 1.0)?.iter().zip(&target) {
            h.counts[bucket_of(gold_rank(probs, g))] += 1;
            h.total += 1;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::model::tests::tiny_config;

    #[test]
    fn rank_ties_favor_lower_ids() {
        assert_eq!(gold_rank(&[0.25; 4], 0), 1);
        assert_eq!(gold_rank(&[0.25; 4], 3), 4);
        assert_eq!(gold_rank(&[0.1, 0.6, 0.3], 2), 2);
    }

    #[test]
    fn labels() {
        let labels: Vec<_> = (0..6).map(RankHistogram::label).collect();
        assert_eq!(labels, ["1", "2", "3-5", "6-10", "11-100", "101+"]);
    }

    #[test]
    fn uniform_model_ranks_follow_ids() {
        let model = SeqModel::zeros(tiny_config(12)).unwrap();
        let dev = EncodedCorpus {
            examples: vec![Example {
                source: vec![4],
                reference: vec![5, 11],
            }],
            domain: "t".into(),
        };
        // gold ids 5, 11 and EOS (2) rank 6, 12 and 3
        let h = gold_rank_histogram(&model, &dev).unwrap();
        assert_eq!(h.counts, [0, 0, 1, 1, 1, 0]);
        assert!((h.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.worst_occupied(), Some(4));
    }
}
