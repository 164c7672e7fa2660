//! Corpus BLEU on the shifted-domain dev set as the beam widens, for a
//! briefly pretrained model, along with the length-normalized score of the
//! best hypothesis for one source.
//!
//! cargo run --release --example beam_curve

use seqrl::diagnostics::beam_curve;
use seqrl::experiment::{cmd_gen_data, cmd_pretrain, load_split, load_vocab, Domain, ExperimentConfig, Split};
use seqrl::model::{beam_decode, load_checkpoint};

fn main() -> seqrl::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut cfg = ExperimentConfig::default();
    cfg.data.dir = tmp.path().join("data");
    cfg.data.train_size = 600;
    cfg.data.dev_size = 60;
    cfg.data.test_size = 60;
    cfg.pretrain.max_steps = 400;
    cfg.pretrain.eval_every = 400;
    cmd_gen_data(&cfg, None)?;
    let model = load_checkpoint(&cmd_pretrain(&cfg, Some(1), Some(&tmp.path().join("pretrain")))?)?;

    let vocab = load_vocab(&cfg.data.dir)?;
    let dev = load_split(&cfg.data.dir, Domain::Cross, Split::Dev, &vocab)?;
    let ks = [1, 2, 5, 10, 50];
    for (k, bleu) in beam_curve(&model, &dev, &ks)?.entries {
        println!("k={k:<3} BLEU {bleu:.2}");
    }
    let source = &dev.examples[0].source;
    for k in ks {
        let h = beam_decode(&model, source, k, model.config.max_len)?;
        println!("k={k:<3} best {:?} normalized log-prob {:.4}", h.tokens, h.normalized);
    }
    Ok(())
}
