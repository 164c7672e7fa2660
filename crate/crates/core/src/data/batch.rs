use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::EncodedCorpus;
use crate::error::{Error, Result};

/// One epoch of token-budgeted batches, as example indices.
///
/// Examples are visited in a permutation seeded by `seed` and packed greedily:
/// a batch is closed as soon as the next example's target tokens (EOS
/// included) would overflow `token_budget`.
pub fn batches(corpus: &EncodedCorpus, token_budget: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if let Some(longest) = corpus.examples.iter().map(|e| e.target_len()).max() {
        if longest > token_budget {
            return Err(Error::Config(format!(
                "token_budget {token_budget} is smaller than the longest target ({longest} tokens)"
            )));
        }
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut used = 0;
    for i in order {
        let n = corpus.examples[i].target_len();
        if used + n > token_budget && !current.is_empty() {
            out.push(std::mem::take(&mut current));
            used = 0;
        }
        current.push(i);
        used += n;
    }
    if !current.is_empty() {
        out.push(current);
    }
    Ok(out)
}

/// Endless stream of batches; epoch `e` is shuffled with `seed + e`.
pub struct BatchStream<'a> {
    corpus: &'a EncodedCorpus,
    token_budget: usize,
    seed: u64,
    epoch: u64,
    pending: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> BatchStream<'a> {
    pub fn new(corpus: &'a EncodedCorpus, token_budget: usize, seed: u64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Config("cannot batch an empty corpus".into()));
        }
        let first = batches(corpus, token_budget, seed)?;
        Ok(BatchStream {
            corpus,
            token_budget,
            seed,
            epoch: 0,
            pending: first.into_iter(),
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if let Some(b) = self.pending.next() {
            return Some(b);
        }
        self.epoch += 1;
        let next = batches(
            self.corpus,
            self.token_budget,
            self.seed.wrapping_add(self.epoch),
        )
        .expect("budget was validated on construction");
        self.pending = next.into_iter();
        self.pending.next()
    }
}
