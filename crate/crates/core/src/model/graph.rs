//! Teacher-forced forward pass recorded on an autodiff tape.

use rand::Rng;

use super::{AttnIdx, FfIdx, NormIdx, SeqModel};
use crate::autodiff::{Tape, Var};
use crate::data::BOS;
use crate::tensor::{AttnShape, Matrix};

/// Model parameters registered as tape leaves, index-aligned with
/// `SeqModel::params`.
pub struct ParamVars(pub Vec<Var>);

impl ParamVars {
    pub fn register<'m>(tape: &mut Tape<'m>, model: &'m SeqModel) -> Self {
        ParamVars(model.params.iter().map(|p| tape.param(p)).collect())
    }
}

/// Dropout masks drawn from `rng` when present.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Builds encoder and decoder subgraphs for one model.
pub struct Graph<'a, 'r, R: Rng> {
    model: &'a SeqModel,
    p: &'a ParamVars,
    dropout: Option<Dropout<'r, R>>,
}

impl<'a, 'r, R: Rng> Graph<'a, 'r, R> {
    pub fn new(model: &'a SeqModel, params: &'a ParamVars, dropout: Option<Dropout<'r, R>>) -> Self {
        Graph {
            model,
            p: params,
            dropout,
        }
    }

    fn var(&self, idx: usize) -> Var {
        self.p.0[idx]
    }

    fn drop(&mut self, tape: &mut Tape<'_>, x: Var) -> Var {
        let Some(d) = self.dropout.as_mut() else {
            return x;
        };
        if d.rate == 0.0 {
            return x;
        }
        let (r, c) = tape.value(x).shape();
        let keep = 1.0 / (1.0 - d.rate);
        let mask = (0..r * c)
            .map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep })
            .collect();
        tape.mul_const(x, Matrix::from_vec(r, c, mask))
    }

    fn norm(&self, tape: &mut Tape<'_>, x: Var, n: NormIdx) -> Var {
        tape.layer_norm(x, self.var(n.gain), self.var(n.bias))
    }

    fn attention(
        &self,
        tape: &mut Tape<'_>,
        query: Var,
        memory: Var,
        a: AttnIdx,
        causal: bool,
    ) -> Var {
        let q = tape.affine(query, self.var(a.wq), self.var(a.bq));
        let k = tape.affine(memory, self.var(a.wk), self.var(a.bk));
        let v = tape.affine(memory, self.var(a.wv), self.var(a.bv));
        let shape = AttnShape {
            heads: self.model.config.heads,
            causal_offset: causal.then_some(0),
        };
        let ctx = tape.attention(q, k, v, shape);
        tape.affine(ctx, self.var(a.wo), self.var(a.bo))
    }

    fn feed_forward(&self, tape: &mut Tape<'_>, x: Var, f: FfIdx) -> Var {
        let h = tape.affine(x, self.var(f.w1), self.var(f.b1));
        let h = tape.relu(h);
        tape.affine(h, self.var(f.w2), self.var(f.b2))
    }

    fn embed(&mut self, tape: &mut Tape<'_>, table: usize, ids: &[usize]) -> Var {
        let d = self.model.config.model_dim;
        let e = tape.gather(self.var(table), ids);
        let e = tape.scale(e, (d as f64).sqrt());
        let pe = self.model.positions.rows_range(0, ids.len());
        let e = tape.add_const(e, &pe);
        self.drop(tape, e)
    }

    pub fn encode(&mut self, tape: &mut Tape<'_>, source: &[usize]) -> Var {
        let layout = &self.model.layout;
        let mut x = self.embed(tape, layout.src_embed, source);
        for l in &layout.enc {
            let h = self.norm(tape, x, l.ln1);
            let a = self.attention(tape, h, h, l.attn, false);
            let a = self.drop(tape, a);
            x = tape.add(x, a);
            let h = self.norm(tape, x, l.ln2);
            let f = self.feed_forward(tape, h, l.ff);
            let f = self.drop(tape, f);
            x = tape.add(x, f);
        }
        self.norm(tape, x, layout.enc_ln)
    }

    /// Logits (`len(target) x vocab`) for predicting each `target` token
    /// from `BOS + target[..i]`.
    pub fn decode(&mut self, tape: &mut Tape<'_>, memory: Var, target: &[usize]) -> Var {
        let layout = &self.model.layout;
        let mut inputs = Vec::with_capacity(target.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&target[..target.len() - 1]);
        let mut x = self.embed(tape, layout.trg_embed, &inputs);
        for l in &layout.dec {
            let h = self.norm(tape, x, l.ln1);
            let a = self.attention(tape, h, h, l.self_attn, true);
            let a = self.drop(tape, a);
            x = tape.add(x, a);
            let h = self.norm(tape, x, l.ln2);
            let c = self.attention(tape, h, memory, l.cross_attn, false);
            let c = self.drop(tape, c);
            x = tape.add(x, c);
            let h = self.norm(tape, x, l.ln3);
            let f = self.feed_forward(tape, h, l.ff);
            let f = self.drop(tape, f);
            x = tape.add(x, f);
        }
        let h = self.norm(tape, x, layout.dec_ln);
        tape.matmul_nt(h, self.var(layout.out_proj))
    }
}

/// Logits (`len(target) x vocab`) for predicting each `target` token from
/// `BOS + target[..i]`. `target` normally ends in EOS.
pub fn teacher_forced_logits<R: Rng>(
    tape: &mut Tape<'_>,
    model: &SeqModel,
    params: &ParamVars,
    source: &[usize],
    target: &[usize],
    dropout: Option<Dropout<'_, R>>,
) -> Var {
    let mut graph = Graph::new(model, params, dropout);
    let memory = graph.encode(tape, source);
    graph.decode(tape, memory, target)
}

/// Row-wise log-probabilities at temperature `tau`.
pub fn tempered_log_probs(tape: &mut Tape<'_>, logits: Var, tau: f64) -> Var {
    let scaled = if tau == 1.0 {
        logits
    } else {
        tape.scale(logits, 1.0 / tau)
    };
    tape.log_softmax(scaled)
}
