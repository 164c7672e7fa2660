//! Compares the Monte Carlo policy gradient with the exact gradient obtained
//! by enumerating every output of a tiny policy.
//!
//! cargo run --release --example gradient_oracle

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqrl::data::Example;
use seqrl::model::{Gradients, ModelConfig, SeqModel};
use seqrl::rewards::sentence_bleu;
use seqrl::training::{enumerate_outputs, exact_pg_gradient, pg_gradient};

fn main() -> seqrl::Result<()> {
    let config = ModelConfig {
        vocab_size: 3,
        layers: 1,
        model_dim: 8,
        heads: 2,
        ff_dim: 12,
        dropout: 0.0,
        tied_embeddings: true,
        max_len: 3,
        label_smoothing: 0.0,
    };
    let model = SeqModel::with_gain(config, 1, 1.5)?;
    let ex = Example {
        source: vec![0, 1],
        reference: vec![1, 0],
    };
    let reward = |h: &[usize], r: &[usize]| sentence_bleu(h, r, 4);
    println!("{} outputs enumerated", enumerate_outputs(3, 3)?.len());
    let exact = exact_pg_gradient(&model, &ex.source, &ex.reference, 3, 1.0, reward)?.flat();
    let norm = exact.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum = Gradients::zeros_like(&model);
    let mut drawn = 0;
    for n in [100, 1_000, 10_000, 50_000] {
        while drawn < n {
            let g = pg_gradient(&model, &[&ex], 1.0, reward, |r| r.to_vec(), &mut rng)?;
            sum.add_assign(&g.grads);
            drawn += 1;
        }
        let diff: f64 = sum
            .flat()
            .iter()
            .zip(&exact)
            .map(|(s, e)| (s / n as f64 - e).powi(2))
            .sum::<f64>()
            .sqrt();
        println!("{n:>6} samples: relative L2 error {:.4}", diff / norm);
    }
    Ok(())
}
