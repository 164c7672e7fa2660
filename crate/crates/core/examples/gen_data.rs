//! Generates the in-domain and cross-domain corpora plus the shared vocabulary.
//!
//! cargo run --release --example gen_data [out_dir]

use std::fs;
use std::path::PathBuf;

use seqrl::experiment::{cmd_gen_data, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().join("data"));
    let mut cfg = ExperimentConfig::default();
    cfg.data.train_size = 500;
    cfg.data.dev_size = 50;
    cfg.data.test_size = 50;
    let dir = cmd_gen_data(&cfg, Some(&out))?;

    let mut names: Vec<_> = fs::read_dir(&dir)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    for name in names {
        let text = fs::read_to_string(dir.join(&name))?;
        println!("{:<28} {:>5} lines", name.to_string_lossy(), text.lines().count());
    }
    for name in ["in.train.src", "in.train.trg", "cross.train.trg"] {
        if let Ok(text) = fs::read_to_string(dir.join(name)) {
            println!("{name}: {}", text.lines().next().unwrap_or(""));
        }
    }
    Ok(())
}
