//! Temperature-scaled softmax: entropy of one distribution over a grid of
//! temperatures, and sampling frequencies against the tempered
//! probabilities of the first decoder step.
//!
//! cargo run --release --example temperature

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqrl::model::{forward_step, sample_sequence, tempered_softmax, ModelConfig, SeqModel};

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn main() -> seqrl::Result<()> {
    let logits = [2.0, 1.0, 0.5, -1.0, 0.0];
    for tau in [0.1, 0.5, 0.8, 1.0, 1.2, 2.0, 10.0] {
        let p = tempered_softmax(&logits, tau)?;
        println!("tau {tau:>5}: entropy {:.4}  p {p:.3?}", entropy(&p));
    }

    let config = ModelConfig {
        vocab_size: 6,
        layers: 1,
        model_dim: 8,
        heads: 2,
        ff_dim: 12,
        dropout: 0.0,
        tied_embeddings: true,
        max_len: 4,
        label_smoothing: 0.0,
    };
    let model = SeqModel::with_gain(config, 3, 2.0)?;
    let src = [4, 5];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    for tau in [0.8, 1.0, 1.2] {
        let p = tempered_softmax(&forward_step(&model, &src, &[])?, tau)?;
        let mut counts = vec![0usize; p.len()];
        for _ in 0..n {
            counts[sample_sequence(&model, &src, tau, 1, &mut rng)?.tokens[0]] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        println!("tau {tau}: expected {p:.3?}");
        println!("         observed {freq:.3?}");
    }
    Ok(())
}
