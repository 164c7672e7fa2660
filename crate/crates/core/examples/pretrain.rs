//! Pretrains a small model on the mixed corpus, then evaluates it on the
//! shifted domain: BLEU per beam size, peakiness and gold-rank buckets.
//!
//! cargo run --release --example pretrain

use seqrl::diagnostics::RankHistogram;
use seqrl::experiment::{cmd_evaluate, cmd_gen_data, cmd_pretrain, ExperimentConfig};

fn main() -> seqrl::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut cfg = ExperimentConfig::default();
    cfg.data.dir = tmp.path().join("data");
    cfg.data.train_size = 1000;
    cfg.data.dev_size = 100;
    cfg.data.test_size = 100;
    cfg.pretrain.max_steps = 200;
    cfg.pretrain.eval_every = 50;
    cfg.eval.beam_sizes = vec![1, 5];

    cmd_gen_data(&cfg, None)?;
    let ckpt = cmd_pretrain(&cfg, Some(1), Some(&tmp.path().join("pretrain")))?;
    println!("checkpoint: {}", ckpt.display());

    let report = cmd_evaluate(&cfg, &ckpt, None)?;
    for (k, bleu) in &report.beam.entries {
        println!("BLEU k={k}: {bleu:.2}");
    }
    let p = report.peakiness;
    println!("p_top10 {:.4}  p_mode {:.4}  p_gold {:.4}", p.p_top10, p.p_mode, p.p_gold);
    for (b, f) in report.ranks.fractions().iter().enumerate() {
        println!("gold rank {:<8} {:.3}", RankHistogram::label(b), f);
    }
    Ok(())
}
