//! Incremental decoding with cached keys and values. Dropout is never
//! applied here.

use super::{AttnIdx, FfIdx, NormIdx, SeqModel};
use crate::data::BOS;
use crate::tensor::{self, AttnShape, Matrix};

/// Encoder output projected into every decoder layer's cross-attention keys
/// and values.
#[derive(Clone, Debug)]
pub struct Encoded {
    cross: Vec<(Matrix, Matrix)>,
}

/// Self-attention keys and values of the decoded prefix.
#[derive(Clone, Debug)]
pub struct DecoderState {
    self_kv: Vec<(Matrix, Matrix)>,
    position: usize,
}

impl DecoderState {
    /// Number of decoder inputs consumed so far (BOS included).
    pub fn position(&self) -> usize {
        self.position
    }
}

fn norm(model: &SeqModel, x: &Matrix, n: NormIdx) -> Matrix {
    tensor::layer_norm(x, &model.params[n.gain], &model.params[n.bias]).0
}

fn proj(model: &SeqModel, x: &Matrix, w: usize, b: usize) -> Matrix {
    tensor::affine(x, &model.params[w], &model.params[b])
}

fn feed_forward(model: &SeqModel, x: &Matrix, f: FfIdx) -> Matrix {
    let mut h = proj(model, x, f.w1, f.b1);
    for v in &mut h.data {
        *v = v.max(0.0);
    }
    proj(model, &h, f.w2, f.b2)
}

fn embed(model: &SeqModel, table: usize, ids: &[usize], start: usize) -> Matrix {
    let d = model.config.model_dim;
    let scale = (d as f64).sqrt();
    let t = &model.params[table];
    let mut e = Matrix::zeros(ids.len(), d);
    for (i, &id) in ids.iter().enumerate() {
        let pe = model.positions.row(start + i);
        for ((o, &w), &p) in e.row_mut(i).iter_mut().zip(t.row(id)).zip(pe) {
            *o = w * scale + p;
        }
    }
    e
}

fn attend(model: &SeqModel, q_in: &Matrix, k: &Matrix, v: &Matrix, a: AttnIdx, causal: Option<usize>) -> Matrix {
    let q = proj(model, q_in, a.wq, a.bq);
    let shape = AttnShape {
        heads: model.config.heads,
        causal_offset: causal,
    };
    let ctx = tensor::attention(&q, k, v, shape).0;
    proj(model, &ctx, a.wo, a.bo)
}

/// Runs the encoder once for `source`.
pub fn encode(model: &SeqModel, source: &[usize]) -> Encoded {
    let layout = &model.layout;
    let mut x = embed(model, layout.src_embed, source, 0);
    for l in &layout.enc {
        let h = norm(model, &x, l.ln1);
        let k = proj(model, &h, l.attn.wk, l.attn.bk);
        let v = proj(model, &h, l.attn.wv, l.attn.bv);
        x.add_assign(&attend(model, &h, &k, &v, l.attn, None));
        let h = norm(model, &x, l.ln2);
        x.add_assign(&feed_forward(model, &h, l.ff));
    }
    let memory = norm(model, &x, layout.enc_ln);
    let cross = layout
        .dec
        .iter()
        .map(|l| {
            (
                proj(model, &memory, l.cross_attn.wk, l.cross_attn.bk),
                proj(model, &memory, l.cross_attn.wv, l.cross_attn.bv),
            )
        })
        .collect();
    Encoded { cross }
}

/// Fresh decoder state positioned before BOS.
pub fn start(model: &SeqModel) -> DecoderState {
    let d = model.config.model_dim;
    DecoderState {
        self_kv: (0..model.config.layers)
            .map(|_| (Matrix::zeros(0, d), Matrix::zeros(0, d)))
            .collect(),
        position: 0,
    }
}

/// Feeds one decoder input token and returns the next-token logits.
///
/// Panics if the state already holds `max_len` positions; callers check.
pub fn step(model: &SeqModel, enc: &Encoded, state: &mut DecoderState, token: usize) -> Vec<f64> {
    assert!(state.position < model.config.max_len, "decoder position overflow");
    let layout = &model.layout;
    let pos = state.position;
    let mut x = embed(model, layout.trg_embed, &[token], pos);
    for (li, l) in layout.dec.iter().enumerate() {
        let h = norm(model, &x, l.ln1);
        let k = proj(model, &h, l.self_attn.wk, l.self_attn.bk);
        let v = proj(model, &h, l.self_attn.wv, l.self_attn.bv);
        let (kc, vc) = &mut state.self_kv[li];
        kc.push_row(k.row(0));
        vc.push_row(v.row(0));
        x.add_assign(&attend(model, &h, kc, vc, l.self_attn, Some(pos)));
        let h = norm(model, &x, l.ln2);
        let (ck, cv) = &enc.cross[li];
        x.add_assign(&attend(model, &h, ck, cv, l.cross_attn, None));
        let h = norm(model, &x, l.ln3);
        x.add_assign(&feed_forward(model, &h, l.ff));
    }
    let h = norm(model, &x, layout.dec_ln);
    state.position += 1;
    tensor::matmul_nt(&h, &model.params[layout.out_proj]).data
}

/// Encodes `source`, feeds BOS and returns the state with first-step logits.
pub fn begin(model: &SeqModel, source: &[usize]) -> (Encoded, DecoderState, Vec<f64>) {
    let enc = encode(model, source);
    let mut state = start(model);
    let logits = step(model, &enc, &mut state, BOS);
    (enc, state, logits)
}
