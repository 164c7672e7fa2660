//! Minimum-risk training on a toy task: the sample set of one source, its
//! risk under a few smoothness values, and a short training run.
//!
//! cargo run --release --example minimum_risk

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqrl::data::Example;
use seqrl::model::{ModelConfig, SeqModel};
use seqrl::rewards::{sentence_bleu, BaseReward};
use seqrl::training::{mrt_risk, mrt_sample_set, mrt_step, Optimizer};

fn main() -> seqrl::Result<()> {
    let ex = |source: Vec<usize>, reference: Vec<usize>| Example { source, reference };
    let data = [ex(vec![4, 5, 6], vec![6, 5, 4]), ex(vec![5, 5], vec![4, 4]), ex(vec![6], vec![5])];
    let batch: Vec<&Example> = data.iter().collect();
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
    let mut model = SeqModel::new(config, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let set = mrt_sample_set(&model, &data[0], 8, &mut rng)?;
    let rewards: Vec<f64> = set
        .iter()
        .map(|y| sentence_bleu(y.strip_suffix(&[2]).unwrap_or(y), &data[0].reference, 4))
        .collect();
    println!("{} distinct samples, rewards {rewards:.3?}", set.len());
    for alpha in [0.005, 0.5, 1.0] {
        println!("risk at alpha {alpha}: {:.4}", mrt_risk(&model, &data[0].source, &set, &rewards, alpha, None)?);
    }

    let mut opt = Optimizer::adam(1e-2);
    for step in 1..=300 {
        let r = mrt_step(&mut model, &batch, 5, 0.005, BaseReward::Bleu, &mut opt, 0, &mut rng)?;
        if step % 50 == 0 {
            println!("step {step}: risk {:.4}  mean BLEU {:.3}", r.loss, r.mean_reward);
        }
    }
    Ok(())
}
