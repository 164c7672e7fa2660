use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{mean_std, MeanStd};
use super::{Domain, ExperimentConfig};
use crate::data::{build_vocab, gen_corpus, EncodedCorpus, ParallelCorpus, Vocabulary};
use crate::diagnostics::{
    beam_curve, gold_rank_histogram, peakiness, relative_change, BeamCurve, PeakinessChange, PeakinessStats,
    RankHistogram,
};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, SeqModel};
use crate::training::{train, LogRecord, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    #[default]
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

const VOCAB_FILE: &str = "vocab.txt";
const PRETRAIN_SET: &str = "pretrain.train";

fn corpus_name(domain: Domain, split: Split) -> String {
    format!("{}.{}", domain.prefix(), split.name())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes the in-domain and cross-domain splits, the mixed pretraining set and
/// the shared vocabulary to `out` (default: `data.dir`). Returns the directory.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.data.dir.clone());
    create_dir(&dir)?;
    let d = &cfg.data;
    let n_mix = (d.train_size as f64 * d.pretrain_mix).round() as usize;
    let a = gen_corpus(&cfg.task, d.train_size, d.dev_size, d.test_size, d.seed)?;
    let mut b = gen_corpus(&cfg.cross_task, d.train_size + n_mix, d.dev_size, d.test_size, d.seed + 1)?;
    let cross_train = ParallelCorpus {
        pairs: b.train.pairs.split_off(n_mix),
        domain: b.train.domain.clone(),
    };
    let mut mixed = a.train.pairs[..d.train_size - n_mix].to_vec();
    mixed.extend(b.train.pairs.iter().cloned());
    let pretrain = ParallelCorpus {
        pairs: mixed,
        domain: format!("{}+{}", a.train.domain, b.train.domain),
    };
    let vocab = build_vocab(&[&pretrain, &cross_train, &a.train])?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    pretrain.write(&dir, PRETRAIN_SET)?;
    for (domain, splits) in [(Domain::In, (&a.train, &a.dev, &a.test)), (Domain::Cross, (&cross_train, &b.dev, &b.test))] {
        splits.0.write(&dir, &corpus_name(domain, Split::Train))?;
        splits.1.write(&dir, &corpus_name(domain, Split::Dev))?;
        splits.2.write(&dir, &corpus_name(domain, Split::Test))?;
    }
    log::info!("wrote corpora to {}", dir.display());
    Ok(dir)
}

pub fn load_vocab(data_dir: &Path) -> Result<Vocabulary> {
    Vocabulary::load(&data_dir.join(VOCAB_FILE))
}

/// Reads and encodes `<domain>.<split>` from a data directory.
pub fn load_split(data_dir: &Path, domain: Domain, split: Split, vocab: &Vocabulary) -> Result<EncodedCorpus> {
    let name = corpus_name(domain, split);
    Ok(ParallelCorpus::read(data_dir, &name, &name)?.encode(vocab))
}

fn head(corpus: &EncodedCorpus, n: usize) -> EncodedCorpus {
    EncodedCorpus {
        examples: corpus.examples.iter().take(n).cloned().collect(),
        domain: corpus.domain.clone(),
    }
}

fn resolve_model_config(cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<ModelConfig> {
    let mut m = cfg.model.clone();
    if m.vocab_size == 0 {
        m.vocab_size = vocab.len();
    } else if m.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model.vocab_size = {} but the vocabulary has {} entries",
            m.vocab_size,
            vocab.len()
        )));
    }
    m.validate()?;
    Ok(m)
}

/// Names every architectural field on which `found` differs from `expected`.
fn check_compatible(expected: &ModelConfig, found: &ModelConfig) -> Result<()> {
    let mut diffs = Vec::new();
    let mut cmp = |name: &str, a: String, b: String| {
        if a != b {
            diffs.push(format!("{name} (config {a}, checkpoint {b})"));
        }
    };
    cmp("vocab_size", expected.vocab_size.to_string(), found.vocab_size.to_string());
    cmp("layers", expected.layers.to_string(), found.layers.to_string());
    cmp("model_dim", expected.model_dim.to_string(), found.model_dim.to_string());
    cmp("heads", expected.heads.to_string(), found.heads.to_string());
    cmp("ff_dim", expected.ff_dim.to_string(), found.ff_dim.to_string());
    cmp("tied_embeddings", expected.tied_embeddings.to_string(), found.tied_embeddings.to_string());
    cmp("max_len", expected.max_len.to_string(), found.max_len.to_string());
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::Incompatible(diffs.join(", ")))
    }
}

fn load_model(cfg: &ExperimentConfig, checkpoint: &Path, vocab: &Vocabulary) -> Result<SeqModel> {
    let expected = resolve_model_config(cfg, vocab)?;
    let mut model = load_checkpoint(checkpoint)?;
    check_compatible(&expected, &model.config)?;
    model.config.dropout = expected.dropout;
    model.config.label_smoothing = expected.label_smoothing;
    Ok(model)
}

/// Runs `train` while streaming every log record to `<dir>/metrics.jsonl`.
fn train_logged(
    model: SeqModel,
    train_set: &EncodedCorpus,
    dev: &EncodedCorpus,
    tc: &TrainConfig,
    dir: &Path,
) -> Result<crate::training::TrainOutcome> {
    let path = dir.join("metrics.jsonl");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    let outcome = train(model, train_set, dev, tc, &mut |rec: &LogRecord| {
        let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        if let LogRecord::Eval(e) = rec {
            log::info!("step {} dev bleu {:.2}", e.step, e.value);
        }
        Ok(())
    })?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}

/// Pretrains a fresh model on the mixed pretraining set, keeping the best
/// in-domain dev checkpoint. Writes `model.ckpt`, `metrics.jsonl` and
/// `config.toml` to `out` (default: `<run.out_dir>/pretrain`) and returns the
/// checkpoint path.
pub fn cmd_pretrain(cfg: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.run.out_dir.join("pretrain"));
    let data = &cfg.data.dir;
    let vocab = load_vocab(data)?;
    let train_set = ParallelCorpus::read(data, PRETRAIN_SET, PRETRAIN_SET)?.encode(&vocab);
    let dev = head(&load_split(data, Domain::In, Split::Dev, &vocab)?, cfg.eval.dev_subset);
    let model_cfg = resolve_model_config(cfg, &vocab)?;
    let mut tc = cfg.pretrain.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    create_dir(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;
    let model = SeqModel::new(model_cfg, tc.seed)?;
    let outcome = train_logged(model, &train_set, &dev, &tc, &dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&outcome.model, &ckpt)?;
    log::info!("best dev bleu {:.2}; checkpoint {}", outcome.best_dev, ckpt.display());
    Ok(ckpt)
}

/// Beam curve on the evaluation split plus dev-set distribution statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub domain: Domain,
    pub split: Split,
    pub beam: BeamCurve,
    pub peakiness: PeakinessStats,
    pub ranks: RankHistogram,
}

fn evaluate_model(
    model: &SeqModel,
    eval_set: &EncodedCorpus,
    dev: &EncodedCorpus,
    cfg: &ExperimentConfig,
) -> Result<EvaluationReport> {
    Ok(EvaluationReport {
        domain: cfg.eval.domain,
        split: cfg.eval.split,
        beam: beam_curve(model, eval_set, &cfg.eval.beam_sizes)?,
        peakiness: peakiness(model, dev, 1.0)?,
        ranks: gold_rank_histogram(model, dev)?,
    })
}

/// Evaluates a checkpoint on the configured domain; writes
/// `<out>/evaluation.json` when `out` is given.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<EvaluationReport> {
    cfg.validate()?;
    let data = &cfg.data.dir;
    let vocab = load_vocab(data)?;
    let model = load_model(cfg, checkpoint, &vocab)?;
    let eval_set = load_split(data, cfg.eval.domain, cfg.eval.split, &vocab)?;
    let dev = load_split(data, cfg.eval.domain, Split::Dev, &vocab)?;
    let report = evaluate_model(&model, &eval_set, &dev, cfg)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("evaluation.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub eval: EvaluationReport,
    pub change: PeakinessChange,
    /// Dev BLEU against steps taken in this run.
    pub dev_curve: Vec<(u64, f64)>,
    pub skipped_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// The starting checkpoint, evaluated the same way.
    pub baseline: EvaluationReport,
    pub runs: Vec<SeedResult>,
    /// Mean and sample standard deviation across seeds: `bleu_k<k>`,
    /// `delta_p_top10_pct`, `delta_p_mode_pct`, `delta_p_gold_pct`.
    pub metrics: BTreeMap<String, MeanStd>,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<MeanStd> {
        self.metrics.get(name).copied()
    }
}

/// Fine-tunes the checkpoint once per seed with the `[train]` settings on the
/// configured domain. Each seed gets `<out>/seed-<s>/` with `model.ckpt`,
/// `metrics.jsonl` and `result.json`; the aggregate goes to
/// `<out>/summary.json`. `out` defaults to `<run.out_dir>/<label>`.
pub fn cmd_rl(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    seeds: Option<&[u64]>,
    out: Option<&Path>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let seeds = seeds.unwrap_or(&cfg.run.seeds).to_vec();
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let label = cfg.label();
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.run.out_dir.join(&label));
    let data = &cfg.data.dir;
    let vocab = load_vocab(data)?;
    let base = load_model(cfg, checkpoint, &vocab)?;
    let domain = cfg.eval.domain;
    let train_set = load_split(data, domain, Split::Train, &vocab)?;
    let dev = load_split(data, domain, Split::Dev, &vocab)?;
    let dev_small = head(&dev, cfg.eval.dev_subset);
    let eval_set = load_split(data, domain, cfg.eval.split, &vocab)?;
    create_dir(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;

    let baseline = evaluate_model(&base, &eval_set, &dev, cfg)?;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        log::info!("{label}: seed {seed}");
        let seed_dir = dir.join(format!("seed-{seed}"));
        create_dir(&seed_dir)?;
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        let start = base.step_count;
        let outcome = train_logged(base.clone(), &train_set, &dev_small, &tc, &seed_dir)?;
        save_checkpoint(&outcome.model, &seed_dir.join("model.ckpt"))?;
        let eval = evaluate_model(&outcome.model, &eval_set, &dev, cfg)?;
        let skipped_steps = count_skipped(&seed_dir.join("metrics.jsonl"))?;
        let result = SeedResult {
            seed,
            change: relative_change(&baseline.peakiness, &eval.peakiness),
            eval,
            dev_curve: outcome.evals.iter().map(|e| (e.step - start, e.value)).collect(),
            skipped_steps,
        };
        write_json(&seed_dir.join("result.json"), &result)?;
        runs.push(result);
    }
    let summary = RunSummary {
        label,
        train: cfg.train.clone(),
        seeds,
        metrics: aggregate(&runs, &cfg.eval.beam_sizes),
        baseline,
        runs,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn count_skipped(metrics: &Path) -> Result<usize> {
    let text = fs::read_to_string(metrics).map_err(|e| Error::io(metrics, e))?;
    let mut n = 0;
    for line in text.lines() {
        if let Ok(LogRecord::Step(s)) = serde_json::from_str::<LogRecord>(line) {
            n += s.skipped as usize;
        }
    }
    Ok(n)
}

fn aggregate(runs: &[SeedResult], ks: &[usize]) -> BTreeMap<String, MeanStd> {
    let mut m = BTreeMap::new();
    for &k in ks {
        let v: Vec<f64> = runs.iter().filter_map(|r| r.eval.beam.at(k)).collect();
        m.insert(format!("bleu_k{k}"), mean_std(&v));
    }
    let changes: [(&str, fn(&PeakinessChange) -> Option<f64>); 3] = [
        ("delta_p_top10_pct", |c| c.p_top10),
        ("delta_p_mode_pct", |c| c.p_mode),
        ("delta_p_gold_pct", |c| c.p_gold),
    ];
    for (name, get) in changes {
        let v: Option<Vec<f64>> = runs.iter().map(|r| get(&r.change)).collect();
        if let Some(v) = v {
            m.insert(name.to_string(), mean_std(&v));
        }
    }
    m
}
