//! Policy-gradient training on a three-sentence toy task, once per reward
//! transform. Prints the mean sampled BLEU every 100 steps.
//!
//! cargo run --release --example policy_gradient

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqrl::data::Example;
use seqrl::model::{ModelConfig, SeqModel};
use seqrl::rewards::{BaseReward, RewardPipeline, RewardTransform};
use seqrl::training::{pg_step, Optimizer};

fn toy() -> Vec<Example> {
    let ex = |source: Vec<usize>, reference: Vec<usize>| Example { source, reference };
    vec![ex(vec![4, 5, 6], vec![6, 5, 4]), ex(vec![5, 5], vec![4, 4]), ex(vec![6], vec![5])]
}

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: 7,
        layers: 1,
        model_dim: 8,
        heads: 2,
        ff_dim: 12,
        dropout: 0.0,
        tied_embeddings: true,
        max_len: 6,
        label_smoothing: 0.0,
    }
}

fn main() -> seqrl::Result<()> {
    let data = toy();
    let batch: Vec<&Example> = data.iter().collect();
    for transform in [RewardTransform::None, RewardTransform::Baseline, RewardTransform::Minmax] {
        let mut model = SeqModel::with_gain(config(), 7, 1.0)?;
        let mut pipeline = RewardPipeline::new(BaseReward::Bleu, transform);
        let mut opt = Optimizer::adam(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut window = Vec::new();
        print!("{transform:?}:");
        for step in 1..=600 {
            window.push(pg_step(&mut model, &batch, 1.0, &mut pipeline, &mut opt, 0, &mut rng)?.mean_reward);
            if step % 100 == 0 {
                print!(" {:.3}", window.iter().sum::<f64>() / window.len() as f64);
                window.clear();
            }
        }
        println!();
    }
    Ok(())
}
