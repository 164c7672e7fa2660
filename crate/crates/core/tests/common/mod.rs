#![allow(dead_code)]

use rand::Rng;
use seqrl::autodiff::{Tape, Var};
use seqrl::model::{ModelConfig, SeqModel};
use seqrl::tensor::Matrix;

/// One-layer policy over three output ids (PAD, BOS, EOS) emitting at most
/// three tokens.
pub fn tiny_policy(seed: u64, gain: f64) -> SeqModel {
    SeqModel::with_gain(tiny_config(3, 3), seed, gain).unwrap()
}

pub fn tiny_config(vocab: usize, max_len: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        layers: 1,
        model_dim: 8,
        heads: 2,
        ff_dim: 12,
        dropout: 0.0,
        tied_embeddings: true,
        max_len,
        label_smoothing: 0.0,
    }
}

pub fn random_sentence<R: Rng>(rng: &mut R, max_len: usize, alphabet: usize) -> Vec<usize> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| 4 + rng.gen_range(0..alphabet)).collect()
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn occurrences(tokens: &[usize], gram: &[usize]) -> usize {
    if gram.len() > tokens.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| &tokens[i..i + gram.len()] == gram)
        .count()
}

/// Clipped n-gram matches by direct scanning: every distinct hypothesis
/// n-gram is counted in both sentences.
fn clipped_matches(hyp: &[usize], reference: &[usize], n: usize) -> usize {
    if hyp.len() < n {
        return 0;
    }
    let mut total = 0;
    for i in 0..=hyp.len() - n {
        let gram = &hyp[i..i + n];
        let first = (0..i).all(|j| &hyp[j..j + n] != gram);
        if first {
            total += occurrences(hyp, gram).min(occurrences(reference, gram));
        }
    }
    total
}

fn ngram_total(tokens: &[usize], n: usize) -> usize {
    tokens.len().saturating_sub(n - 1)
}

/// Sentence BLEU: unsmoothed unigrams, add-one for higher orders, product of
/// precisions raised to 1/N.
pub fn oracle_sentence_bleu(hyp: &[usize], reference: &[usize], max_order: usize) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=max_order {
        let m = clipped_matches(hyp, reference, n) as f64;
        let t = ngram_total(hyp, n) as f64;
        product *= if n == 1 { m / t } else { (m + 1.0) / (t + 1.0) };
    }
    let bp = if hyp.len() >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
    };
    product.powf(1.0 / max_order as f64) * bp
}

/// Pooled corpus BLEU on a 0-100 scale, skipping orders absent from both
/// sides.
pub fn oracle_corpus_bleu(hyps: &[Vec<usize>], refs: &[Vec<usize>]) -> f64 {
    let hyp_len: usize = hyps.iter().map(Vec::len).sum();
    let ref_len: usize = refs.iter().map(Vec::len).sum();
    if hyp_len == 0 {
        return 0.0;
    }
    let mut product = 1.0;
    let mut orders = 0;
    for n in 1..=4 {
        let m: usize = hyps.iter().zip(refs).map(|(h, r)| clipped_matches(h, r, n)).sum();
        let t: usize = hyps.iter().map(|h| ngram_total(h, n)).sum();
        let rt: usize = refs.iter().map(|r| ngram_total(r, n)).sum();
        if t == 0 && rt == 0 {
            continue;
        }
        if m == 0 {
            return 0.0;
        }
        product *= m as f64 / t as f64;
        orders += 1;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    100.0 * product.powf(1.0 / orders as f64) * bp
}

/// Largest relative error between the tape gradient of `f` and five-point
/// differences, over every entry of every input. Entries whose magnitudes
/// are both below `floor` are compared against `floor`.
pub fn max_fd_error<F>(inputs: &[Matrix], f: F, floor: f64) -> f64
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Var,
{
    let eval = |ins: &[Matrix]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|m| tape.param(m)).collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m)).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out);
    let mut worst: f64 = 0.0;
    for (i, m) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(m.rows, m.cols));
        for e in 0..m.len() {
            let numeric = five_point(|offset| {
                let mut shifted = inputs.to_vec();
                shifted[i].data[e] += offset;
                eval(&shifted)
            });
            worst = worst.max(relative_error(analytic.data[e], numeric, floor));
        }
    }
    worst
}

/// Five-point central difference of `f` at offset zero, step `1e-4`.
pub fn five_point(mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = 1e-4;
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between `grad` and five-point differences of `f`
/// over the flattened parameters of `model`.
pub fn max_param_fd_error(model: &SeqModel, grad: &[f64], f: impl Fn(&SeqModel) -> f64, floor: f64) -> f64 {
    let base = model.flat();
    let mut m = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let numeric = five_point(|offset| {
            let mut v = base.clone();
            v[i] += offset;
            m.set_flat(&v);
            f(&m)
        });
        worst = worst.max(relative_error(grad[i], numeric, floor));
    }
    worst
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
