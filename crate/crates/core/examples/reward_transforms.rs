//! Sentence BLEU and the reward transforms: min-max scaling, the running
//! baseline and the minimum-risk weights at several smoothness values.
//!
//! cargo run --release --example reward_transforms

use seqrl::rewards::{baseline_apply, minmax_scale, mrt_weights, sentence_bleu, BaselineState};

fn main() {
    let reference = [4, 5, 6, 7];
    let hyps: [&[usize]; 4] = [&[4, 5, 6, 7], &[4, 5, 6, 8], &[7, 6, 5, 4], &[4, 5]];
    let rewards: Vec<f64> = hyps.iter().map(|h| sentence_bleu(h, &reference, 4)).collect();
    for (h, r) in hyps.iter().zip(&rewards) {
        println!("BLEU {h:?} vs {reference:?}: {r:.4}");
    }

    println!("min-max: {:.3?}", minmax_scale(&rewards));

    let mut state = BaselineState::default();
    let adjusted: Vec<f64> = rewards
        .iter()
        .map(|&r| {
            let (a, next) = baseline_apply(r, state);
            state = next;
            a
        })
        .collect();
    println!("baseline: {adjusted:.3?} (running mean {:.3})", state.running_mean);

    let log_probs = [-1.0, -2.0, -4.0, -8.0];
    for alpha in [0.005, 0.5, 1.0] {
        println!("mrt weights alpha {alpha}: {:.3?}", mrt_weights(&log_probs, alpha).q);
    }
}
