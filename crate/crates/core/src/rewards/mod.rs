//! Base rewards and reward transforms.

mod bleu;
mod transforms;

pub use bleu::{ngram_counts, sentence_bleu, NgramStats};
pub use transforms::{
    baseline_apply, constant_reward, minmax_scale, mrt_weights, BaseReward, BaselineState,
    MrtWeights, Reward, RewardPipeline, RewardTransform,
};
