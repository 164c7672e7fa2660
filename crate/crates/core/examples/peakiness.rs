//! Peakiness and gold-rank diagnostics before and after policy-gradient
//! training on a toy task.
//!
//! cargo run --release --example peakiness

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqrl::data::{EncodedCorpus, Example};
use seqrl::diagnostics::{gold_rank_histogram, peakiness, relative_change, RankHistogram};
use seqrl::model::{ModelConfig, SeqModel};
use seqrl::rewards::{BaseReward, RewardPipeline, RewardTransform};
use seqrl::training::{pg_step, Optimizer};

fn main() -> seqrl::Result<()> {
    let ex = |source: Vec<usize>, reference: Vec<usize>| Example { source, reference };
    let dev = EncodedCorpus {
        examples: vec![ex(vec![4, 5, 6], vec![6, 5, 4]), ex(vec![5, 5], vec![4, 4]), ex(vec![6], vec![5])],
        domain: "toy".into(),
    };
    let config = ModelConfig {
        vocab_size: 7,
        layers: 1,
        model_dim: 16,
        heads: 2,
        ff_dim: 32,
        dropout: 0.0,
        tied_embeddings: true,
        max_len: 6,
        label_smoothing: 0.0,
    };
    let mut model = SeqModel::new(config, 4)?;
    let before = peakiness(&model, &dev, 1.0)?;
    let ranks_before = gold_rank_histogram(&model, &dev)?;

    let batch: Vec<&Example> = dev.examples.iter().collect();
    let mut pipeline = RewardPipeline::new(BaseReward::Bleu, RewardTransform::Baseline);
    let mut opt = Optimizer::adam(1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..400 {
        pg_step(&mut model, &batch, 1.0, &mut pipeline, &mut opt, 0, &mut rng)?;
    }
    let after = peakiness(&model, &dev, 1.0)?;
    let ranks_after = gold_rank_histogram(&model, &dev)?;

    println!("before {before:?}");
    println!("after  {after:?}");
    println!("relative change (%) {:?}", relative_change(&before, &after));
    let (fb, fa) = (ranks_before.fractions(), ranks_after.fractions());
    for b in 0..fb.len() {
        println!("gold rank {:<8} {:.3} -> {:.3}", RankHistogram::label(b), fb[b], fa[b]);
    }
    Ok(())
}
