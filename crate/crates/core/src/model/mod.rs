//! Miniature pre-norm encoder-decoder transformer.
//!
//! Two evaluation routes share the numeric kernels in [`crate::tensor`]:
//! the differentiable teacher-forced pass in [`graph`] and the incremental
//! cached decoder in [`infer`] used for sampling and search.

mod checkpoint;
mod decode;
pub mod graph;
pub mod infer;
mod loss;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{
    beam_decode, forward_step, greedy_decode, sample_sequence, tempered_log_softmax,
    tempered_softmax, Hypothesis,
};
pub use loss::{ce_loss_and_grads, sequence_log_prob, sequence_log_prob_grad, Gradients};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Output vocabulary size; filled from the data vocabulary when zero.
    pub vocab_size: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub tied_embeddings: bool,
    pub max_len: usize,
    pub label_smoothing: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            layers: 2,
            model_dim: 64,
            heads: 4,
            ff_dim: 128,
            dropout: 0.1,
            tied_embeddings: true,
            max_len: 24,
            label_smoothing: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 3 {
            return fail(format!("vocab_size must be >= 3, got {}", self.vocab_size));
        }
        if self.layers == 0 || self.model_dim == 0 || self.heads == 0 || self.ff_dim == 0 {
            return fail("layers, model_dim, heads and ff_dim must be positive".into());
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return fail(format!(
                "label_smoothing must be in [0, 1), got {}",
                self.label_smoothing
            ));
        }
        if self.max_len < 2 {
            return fail("max_len must be >= 2".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FfIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct EncLayerIdx {
    pub ln1: NormIdx,
    pub attn: AttnIdx,
    pub ln2: NormIdx,
    pub ff: FfIdx,
}

#[derive(Clone, Debug)]
pub(crate) struct DecLayerIdx {
    pub ln1: NormIdx,
    pub self_attn: AttnIdx,
    pub ln2: NormIdx,
    pub cross_attn: AttnIdx,
    pub ln3: NormIdx,
    pub ff: FfIdx,
}

/// Parameter indices by role.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub src_embed: usize,
    pub trg_embed: usize,
    /// `vocab x dim`, applied as `h · outᵀ`.
    pub out_proj: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_ln: NormIdx,
    pub dec: Vec<DecLayerIdx>,
    pub dec_ln: NormIdx,
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    Zeros,
    Ones,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize, Init)>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push((rows, cols, init));
        self.names.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let mut lin = |n: &str| {
            (
                self.add(format!("{prefix}.w{n}"), d, d, Init::Xavier),
                self.add(format!("{prefix}.b{n}"), 1, d, Init::Zeros),
            )
        };
        let (wq, bq) = lin("q");
        let (wk, bk) = lin("k");
        let (wv, bv) = lin("v");
        let (wo, bo) = lin("o");
        AttnIdx {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn ff(&mut self, prefix: &str, d: usize, f: usize) -> FfIdx {
        FfIdx {
            w1: self.add(format!("{prefix}.w1"), d, f, Init::Xavier),
            b1: self.add(format!("{prefix}.b1"), 1, f, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), f, d, Init::Xavier),
            b2: self.add(format!("{prefix}.b2"), 1, d, Init::Zeros),
        }
    }
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Builder) {
    let (v, d) = (cfg.vocab_size, cfg.model_dim);
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
    };
    let (src_embed, trg_embed, out_proj) = if cfg.tied_embeddings {
        let e = b.add("embed".into(), v, d, Init::Xavier);
        (e, e, e)
    } else {
        (
            b.add("src_embed".into(), v, d, Init::Xavier),
            b.add("trg_embed".into(), v, d, Init::Xavier),
            b.add("out_proj".into(), v, d, Init::Xavier),
        )
    };
    let enc = (0..cfg.layers)
        .map(|l| EncLayerIdx {
            ln1: b.norm(&format!("enc.{l}.ln1"), d),
            attn: b.attn(&format!("enc.{l}.attn"), d),
            ln2: b.norm(&format!("enc.{l}.ln2"), d),
            ff: b.ff(&format!("enc.{l}.ff"), d, cfg.ff_dim),
        })
        .collect();
    let enc_ln = b.norm("enc.ln", d);
    let dec = (0..cfg.layers)
        .map(|l| DecLayerIdx {
            ln1: b.norm(&format!("dec.{l}.ln1"), d),
            self_attn: b.attn(&format!("dec.{l}.self_attn"), d),
            ln2: b.norm(&format!("dec.{l}.ln2"), d),
            cross_attn: b.attn(&format!("dec.{l}.cross_attn"), d),
            ln3: b.norm(&format!("dec.{l}.ln3"), d),
            ff: b.ff(&format!("dec.{l}.ff"), d, cfg.ff_dim),
        })
        .collect();
    let dec_ln = b.norm("dec.ln", d);
    (
        Layout {
            src_embed,
            trg_embed,
            out_proj,
            enc,
            enc_ln,
            dec,
            dec_ln,
        },
        b,
    )
}

/// Sinusoidal position table, `max_len x dim`.
fn positional_table(max_len: usize, d: usize) -> Matrix {
    let mut pe = Matrix::zeros(max_len, d);
    for pos in 0..max_len {
        for i in 0..d {
            let k = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(k / d as f64);
            pe.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// A transformer and its parameters.
#[derive(Clone, Debug)]
pub struct SeqModel {
    pub config: ModelConfig,
    names: Vec<String>,
    pub params: Vec<Matrix>,
    pub step_count: u64,
    pub(crate) layout: Layout,
    pub(crate) positions: Matrix,
}

impl PartialEq for SeqModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.step_count == other.step_count
            && self.names == other.names
            && self.params == other.params
    }
}

impl SeqModel {
    /// Xavier-uniform weights, zero biases, unit norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init(config, Some(seed), 1.0)
    }

    /// Like [`SeqModel::new`] with every Xavier limit multiplied by `gain`.
    pub fn with_gain(config: ModelConfig, seed: u64, gain: f64) -> Result<Self> {
        Self::init(config, Some(seed), gain)
    }

    /// Every parameter zero, which makes every output distribution uniform.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::init(config, None, 0.0)
    }

    fn init(config: ModelConfig, seed: Option<u64>, gain: f64) -> Result<Self> {
        config.validate()?;
        let (layout, builder) = build_layout(&config);
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let params = builder
            .shapes
            .iter()
            .map(|&(r, c, init)| match (init, rng.as_mut()) {
                (Init::Xavier, Some(rng)) => {
                    let limit = gain * (6.0 / (r + c) as f64).sqrt();
                    let data = (0..r * c)
                        .map(|_| if limit > 0.0 { rng.gen_range(-limit..limit) } else { 0.0 })
                        .collect();
                    Matrix::from_vec(r, c, data)
                }
                (Init::Ones, Some(_)) => Matrix::filled(r, c, 1.0),
                _ => Matrix::zeros(r, c),
            })
            .collect();
        let positions = positional_table(config.max_len, config.model_dim);
        Ok(SeqModel {
            config,
            names: builder.names,
            params,
            step_count: 0,
            layout,
            positions,
        })
    }

    /// Rebuilds a model from named tensors, checking names and shapes.
    pub fn from_parts(
        config: ModelConfig,
        named: Vec<(String, Matrix)>,
        step_count: u64,
    ) -> Result<Self> {
        let mut model = SeqModel::zeros(config)?;
        if named.len() != model.params.len() {
            return Err(Error::Incompatible(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (i, (name, m)) in named.into_iter().enumerate() {
            if name != model.names[i] {
                return Err(Error::Incompatible(format!(
                    "tensor {i}: expected {}, found {name}",
                    model.names[i]
                )));
            }
            if m.shape() != model.params[i].shape() {
                return Err(Error::Incompatible(format!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    model.params[i].shape(),
                    m.shape()
                )));
            }
            model.params[i] = m;
        }
        model.step_count = step_count;
        Ok(model)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(Matrix::all_finite)
    }

    /// `θ += scale · g`
    pub fn apply_update(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            for (a, b) in p.data.iter_mut().zip(&g.data) {
                *a += scale * b;
            }
        }
    }

    /// Flattened parameter vector (finite-difference checks).
    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for p in &mut self.params {
            for v in &mut p.data {
                *v = *it.next().expect("flat vector too short");
            }
        }
    }

    pub(crate) fn check_source(&self, source: &[usize]) -> Result<()> {
        if source.is_empty() || source.len() > self.config.max_len {
            return Err(Error::DecodeLength {
                len: source.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&bad) = source.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Config(format!(
                "token id {bad} outside vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }
}
