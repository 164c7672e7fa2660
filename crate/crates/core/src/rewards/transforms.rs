use serde::{Deserialize, Serialize};

use super::bleu::sentence_bleu;
use crate::tensor;

/// A scalar reward. Base rewards lie in `[0, 1]`; transformed rewards may be
/// negative.
pub type Reward = f64;

pub fn constant_reward() -> Reward {
    1.0
}

/// `(r - min)/(max - min) - 0.5` over one batch; all zeros when `max = min`.
pub fn minmax_scale(batch: &[Reward]) -> Vec<Reward> {
    let min = batch.iter().copied().fold(f64::INFINITY, f64::min);
    let max = batch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; batch.len()];
    }
    let range = max - min;
    batch.iter().map(|r| (r - min) / range - 0.5).collect()
}

/// Unweighted running mean of every reward seen so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub running_mean: f64,
    pub count: u64,
}

/// Subtracts the current mean from `r`, then folds `r` into the mean.
pub fn baseline_apply(r: Reward, state: BaselineState) -> (Reward, BaselineState) {
    let adjusted = r - state.running_mean;
    let count = state.count + 1;
    let running_mean = (state.running_mean * state.count as f64 + r) / count as f64;
    (adjusted, BaselineState { running_mean, count })
}

/// `Q_i ∝ p_i^α` over a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct MrtWeights {
    pub q: Vec<f64>,
    pub alpha: f64,
}

pub fn mrt_weights(log_probs: &[f64], alpha: f64) -> MrtWeights {
    let mut q: Vec<f64> = log_probs.iter().map(|lp| alpha * lp).collect();
    tensor::softmax_in_place(&mut q);
    MrtWeights { q, alpha }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseReward {
    #[default]
    Bleu,
    Constant,
}

impl BaseReward {
    /// Reward of a hypothesis (EOS stripped) against its reference.
    pub fn score(self, hyp: &[usize], reference: &[usize]) -> Reward {
        match self {
            BaseReward::Bleu => sentence_bleu(hyp, reference, 4),
            BaseReward::Constant => constant_reward(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardTransform {
    #[default]
    None,
    Baseline,
    Minmax,
}

/// A base reward followed by a transform. Holds the baseline state, so one
/// pipeline must serve one training run in order.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardPipeline {
    pub base: BaseReward,
    pub transform: RewardTransform,
    pub baseline: BaselineState,
}

impl RewardPipeline {
    pub fn new(base: BaseReward, transform: RewardTransform) -> Self {
        RewardPipeline {
            base,
            transform,
            baseline: BaselineState::default(),
        }
    }

    pub fn score(&self, hyp: &[usize], reference: &[usize]) -> Reward {
        self.base.score(hyp, reference)
    }

    /// Applies the transform to one batch of base rewards, in order.
    pub fn transform_batch(&mut self, raw: &[Reward]) -> Vec<Reward> {
        match self.transform {
            RewardTransform::None => raw.to_vec(),
            RewardTransform::Minmax => minmax_scale(raw),
            RewardTransform::Baseline => raw
                .iter()
                .map(|&r| {
                    let (adjusted, next) = baseline_apply(r, self.baseline);
                    self.baseline = next;
                    adjusted
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_examples() {
        let s = minmax_scale(&[0.2, 0.5, 0.8]);
        for (a, b) in s.iter().zip([-0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(minmax_scale(&[0.7, 0.7]), vec![0.0, 0.0]);
        assert_eq!(minmax_scale(&[0.0, 0.25, 1.0]), vec![-0.5, -0.25, 0.5]);
    }

    #[test]
    fn baseline_streams() {
        let (a, s) = baseline_apply(0.6, BaselineState::default());
        assert_eq!((a, s.running_mean, s.count), (0.6, 0.6, 1));

        let mut p = RewardPipeline::new(BaseReward::Bleu, RewardTransform::Baseline);
        assert_eq!(p.transform_batch(&[0.5, 0.5, 0.5]), vec![0.5, 0.0, 0.0]);

        let mut p = RewardPipeline::new(BaseReward::Bleu, RewardTransform::Baseline);
        let out = p.transform_batch(&[0.2, 0.8]);
        assert!((out[0] - 0.2).abs() < 1e-15 && (out[1] - 0.6).abs() < 1e-15);
        assert!((p.baseline.running_mean - 0.5).abs() < 1e-15);
    }

    #[test]
    fn converged_baseline_cancels_constant_reward() {
        let mut p = RewardPipeline::new(BaseReward::Constant, RewardTransform::Baseline);
        let r = p.score(&[4], &[5]);
        p.transform_batch(&[r; 3]);
        assert_eq!(p.transform_batch(&[r]), vec![0.0]);
    }

    #[test]
    fn mrt_weight_examples() {
        assert_eq!(mrt_weights(&[-3.0, -3.0], 0.7).q, vec![0.5, 0.5]);
        assert_eq!(mrt_weights(&[-1.0, -9.0, -4.0], 0.0).q, vec![1.0 / 3.0; 3]);
        let q = mrt_weights(&[0.8f64.ln(), 0.2f64.ln()], 1.0).q;
        assert!((q[0] - 0.8).abs() < 1e-12 && (q[1] - 0.2).abs() < 1e-12);
    }
}
