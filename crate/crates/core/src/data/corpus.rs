use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, EOS};
use super::Sentence;
use crate::error::{Error, Result};

/// Content symbols, one character per token.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// reference = cipher(source)
    SubstitutionCipher,
    /// reference = cipher(reverse(source))
    ReversalCipher,
}

/// Definition of a synthetic transduction task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Number of content symbols (reserved tokens not included).
    pub vocab_size: usize,
    /// Inclusive source length range.
    pub length_range: (usize, usize),
    pub mapping_seed: u64,
    pub transform: TransformKind,
    /// Number of symbols whose image is changed after drawing the cipher
    /// from `mapping_seed`. Lets two tasks share most of their mapping.
    #[serde(default)]
    pub remap: usize,
    #[serde(default)]
    pub remap_seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let alphabet = ALPHABET.chars().count();
        if self.vocab_size < 8 || self.vocab_size > alphabet {
            return Err(Error::Config(format!(
                "task vocab_size must be in 8..={alphabet}, got {}",
                self.vocab_size
            )));
        }
        let (min, max) = self.length_range;
        if min < 2 || max < min {
            return Err(Error::Config(format!(
                "task length_range must satisfy 2 <= min <= max, got ({min}, {max})"
            )));
        }
        if self.remap == 1 || self.remap > self.vocab_size {
            return Err(Error::Config(format!(
                "task remap must be 0 or in 2..={}, got {}",
                self.vocab_size, self.remap
            )));
        }
        Ok(())
    }

    /// Checks that references plus BOS/EOS fit a model of length `max_len`.
    pub fn validate_for_model(&self, max_len: usize) -> Result<()> {
        self.validate()?;
        if self.length_range.1 + 2 > max_len {
            return Err(Error::Config(format!(
                "task length_range max {} exceeds model max_len - 2 = {}",
                self.length_range.1,
                max_len.saturating_sub(2)
            )));
        }
        Ok(())
    }

    pub fn symbols(&self) -> Vec<String> {
        ALPHABET
            .chars()
            .take(self.vocab_size)
            .map(|c| c.to_string())
            .collect()
    }

    pub fn cipher(&self) -> Cipher {
        Cipher::from_seed(self.vocab_size, self.mapping_seed).remapped(self.remap, self.remap_seed)
    }
}

/// A permutation of content symbol indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cipher {
    map: Vec<usize>,
}

impl Cipher {
    pub fn identity(n: usize) -> Self {
        Cipher {
            map: (0..n).collect(),
        }
    }

    pub fn from_seed(n: usize, seed: u64) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Cipher { map }
    }

    /// Rotates the images of `k` seeded-randomly chosen symbols by one place,
    /// so exactly those `k` symbols map differently (`k >= 2`).
    pub fn remapped(&self, k: usize, seed: u64) -> Cipher {
        if k < 2 {
            return self.clone();
        }
        let mut chosen: Vec<usize> = (0..self.map.len()).collect();
        chosen.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        chosen.truncate(k);
        let mut map = self.map.clone();
        for (i, &s) in chosen.iter().enumerate() {
            map[s] = self.map[chosen[(i + 1) % k]];
        }
        Cipher { map }
    }

    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::Config("cipher map is not a permutation".into()));
            }
        }
        Ok(Cipher { map })
    }

    pub fn apply(&self, symbol: usize) -> usize {
        self.map[symbol]
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One source/reference pair of surface tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TextPair {
    pub source: Vec<String>,
    pub reference: Vec<String>,
}

impl TextPair {
    pub fn from_strs(source: &str, reference: &str) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect();
        TextPair {
            source: split(source),
            reference: split(reference),
        }
    }
}

/// Parallel text plus a domain label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<TextPair>,
    pub domain: String,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Contents of the `.src` and `.trg` files.
    pub fn to_text(&self) -> (String, String) {
        let mut src = String::new();
        let mut trg = String::new();
        for p in &self.pairs {
            src.push_str(&p.source.join(" "));
            src.push('\n');
            trg.push_str(&p.reference.join(" "));
            trg.push('\n');
        }
        (src, trg)
    }

    pub fn from_text(src: &str, trg: &str, domain: &str) -> Result<Self> {
        let (s, t): (Vec<&str>, Vec<&str>) = (src.lines().collect(), trg.lines().collect());
        if s.len() != t.len() {
            return Err(Error::Format(format!(
                "source has {} lines but target has {}",
                s.len(),
                t.len()
            )));
        }
        let pairs: Vec<TextPair> = s
            .iter()
            .zip(&t)
            .map(|(a, b)| TextPair::from_strs(a, b))
            .collect();
        if let Some(i) = pairs
            .iter()
            .position(|p| p.source.is_empty() || p.reference.is_empty())
        {
            return Err(Error::Format(format!("line {} holds an empty sentence", i + 1)));
        }
        Ok(ParallelCorpus {
            pairs,
            domain: domain.to_string(),
        })
    }

    /// Writes `<dir>/<name>.src` and `<dir>/<name>.trg`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let (src, trg) = self.to_text();
        for (ext, text) in [("src", src), ("trg", trg)] {
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path, name: &str, domain: &str) -> Result<Self> {
        let read = |ext: &str| {
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        ParallelCorpus::from_text(&read("src")?, &read("trg")?, domain)
    }

    pub fn encode(&self, vocab: &Vocabulary) -> EncodedCorpus {
        EncodedCorpus {
            examples: self
                .pairs
                .iter()
                .map(|p| Example {
                    source: vocab.encode(&p.source),
                    reference: vocab.encode(&p.reference),
                })
                .collect(),
            domain: self.domain.clone(),
        }
    }
}

/// A source/reference pair of token ids. Neither side carries BOS or EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub source: Sentence,
    pub reference: Sentence,
}

impl Example {
    /// Decoder target tokens, EOS included.
    pub fn target_len(&self) -> usize {
        self.reference.len() + 1
    }

    pub fn target_with_eos(&self) -> Sentence {
        let mut t = self.reference.clone();
        t.push(EOS);
        t
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub examples: Vec<Example>,
    pub domain: String,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedCorpus {
        EncodedCorpus {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            domain: self.domain.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Generates train/dev/test splits for `spec`. Sources are unique across the
/// three splits; references are the deterministic transform of the source.
pub fn gen_corpus(
    spec: &TaskSpec,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    seed: u64,
) -> Result<Splits> {
    gen_corpus_with_cipher(spec, &spec.cipher(), n_train, n_dev, n_test, seed)
}

/// Like [`gen_corpus`] but with an explicit cipher instead of the one derived
/// from `spec.mapping_seed`.
pub fn gen_corpus_with_cipher(
    spec: &TaskSpec,
    cipher: &Cipher,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    seed: u64,
) -> Result<Splits> {
    spec.validate()?;
    if n_train == 0 || n_dev == 0 || n_test == 0 {
        return Err(Error::Config("split sizes must all be >= 1".into()));
    }
    if cipher.len() != spec.vocab_size {
        return Err(Error::Config(format!(
            "cipher covers {} symbols but the task has {}",
            cipher.len(),
            spec.vocab_size
        )));
    }
    let total = n_train + n_dev + n_test;
    let (min, max) = spec.length_range;
    let space: f64 = (min..=max).map(|l| (spec.vocab_size as f64).powi(l as i32)).sum();
    if (total as f64) > space / 2.0 {
        return Err(Error::Config(format!(
            "requested {total} unique sources but the task only has {space} possible"
        )));
    }
    let symbols = spec.symbols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(total);
    let mut pairs = Vec::with_capacity(total);
    while pairs.len() < total {
        let len = rng.gen_range(min..=max);
        let src: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.vocab_size)).collect();
        if !seen.insert(src.clone()) {
            continue;
        }
        let reference = transform(spec.transform, cipher, &src)
            .into_iter()
            .map(|s| symbols[s].clone())
            .collect();
        let source = src.iter().map(|&s| symbols[s].clone()).collect();
        pairs.push(TextPair { source, reference });
    }
    let mut domain = match spec.transform {
        TransformKind::SubstitutionCipher => format!("cipher-{}", spec.mapping_seed),
        TransformKind::ReversalCipher => format!("reversal-cipher-{}", spec.mapping_seed),
    };
    if spec.remap >= 2 {
        domain = format!("{domain}-remap-{}-{}", spec.remap, spec.remap_seed);
    }
    let test = pairs.split_off(n_train + n_dev);
    let dev = pairs.split_off(n_train);
    let wrap = |pairs| ParallelCorpus {
        pairs,
        domain: domain.clone(),
    };
    Ok(Splits {
        train: wrap(pairs),
        dev: wrap(dev),
        test: wrap(test),
    })
}

/// Maps source symbol indices to reference symbol indices.
pub(crate) fn transform(kind: TransformKind, cipher: &Cipher, src: &[usize]) -> Vec<usize> {
    match kind {
        TransformKind::SubstitutionCipher => src.iter().map(|&s| cipher.apply(s)).collect(),
        TransformKind::ReversalCipher => src.iter().rev().map(|&s| cipher.apply(s)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(transform: TransformKind) -> TaskSpec {
        TaskSpec {
            vocab_size: 10,
            length_range: (2, 6),
            mapping_seed: 7,
            transform,
            remap: 0,
            remap_seed: 0,
        }
    }

    #[test]
    fn identity_cipher_copies_source() {
        let s = spec(TransformKind::SubstitutionCipher);
        let splits = gen_corpus_with_cipher(&s, &Cipher::identity(10), 50, 5, 5, 1).unwrap();
        for p in &splits.train.pairs {
            assert_eq!(p.source, p.reference);
        }
    }

    #[test]
    fn reversal_cipher_by_hand() {
        // a->x, b->y, c->z
        let mut map: Vec<usize> = (0..26).collect();
        map.swap(0, 23);
        map.swap(1, 24);
        map.swap(2, 25);
        let cipher = Cipher::from_map(map).unwrap();
        assert_eq!(
            transform(TransformKind::ReversalCipher, &cipher, &[0, 1, 2]),
            vec![25, 24, 23]
        );
        assert_eq!(
            transform(TransformKind::SubstitutionCipher, &cipher, &[0, 1, 2]),
            vec![23, 24, 25]
        );
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = spec(TransformKind::ReversalCipher);
        let a = gen_corpus(&s, 30, 5, 5, 42).unwrap();
        let b = gen_corpus(&s, 30, 5, 5, 42).unwrap();
        assert_eq!(a.train.to_text(), b.train.to_text());
        assert_eq!(a.test.to_text(), b.test.to_text());
    }

    #[test]
    fn splits_are_disjoint_and_bounded() {
        let s = spec(TransformKind::SubstitutionCipher);
        let sp = gen_corpus(&s, 100, 20, 20, 9).unwrap();
        let train: HashSet<_> = sp.train.pairs.iter().map(|p| p.source.clone()).collect();
        for p in sp.dev.pairs.iter().chain(&sp.test.pairs) {
            assert!(!train.contains(&p.source));
        }
        for p in &sp.train.pairs {
            assert!((2..=6).contains(&p.source.len()));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(TransformKind::SubstitutionCipher);
        s.vocab_size = 4;
        assert!(matches!(gen_corpus(&s, 1, 1, 1, 0), Err(Error::Config(_))));
        let mut s = spec(TransformKind::SubstitutionCipher);
        s.length_range = (1, 3);
        assert!(s.validate().is_err());
        let s = spec(TransformKind::SubstitutionCipher);
        assert!(s.validate_for_model(7).is_err());
        assert!(s.validate_for_model(8).is_ok());
        assert!(gen_corpus(&s, 0, 1, 1, 0).is_err());
    }

    #[test]
    fn distinct_seeds_give_mostly_distinct_ciphers() {
        let a = Cipher::from_seed(20, 1);
        let b = Cipher::from_seed(20, 2);
        let same = (0..20).filter(|&i| a.apply(i) == b.apply(i)).count();
        assert!(same <= 2, "{same} fixed points");
    }

    #[test]
    fn text_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(TransformKind::ReversalCipher);
        let sp = gen_corpus(&s, 20, 2, 2, 5).unwrap();
        sp.train.write(dir.path(), "train").unwrap();
        let back = ParallelCorpus::read(dir.path(), "train", &sp.train.domain).unwrap();
        assert_eq!(back, sp.train);
    }

    #[test]
    fn ragged_files_are_rejected() {
        assert!(ParallelCorpus::from_text("a b\nc\n", "x\n", "d").is_err());
        assert!(ParallelCorpus::from_text("a b\n\n", "x\ny\n", "d").is_err());
    }

    #[test]
    fn remap_changes_exactly_k_symbols() {
        let base = Cipher::from_seed(12, 1);
        for k in [2, 4, 12] {
            let c = base.remapped(k, 5);
            let changed = (0..12).filter(|&i| c.apply(i) != base.apply(i)).count();
            assert_eq!(changed, k);
            assert!(Cipher::from_map(c.map.clone()).is_ok());
        }
        assert_eq!(base.remapped(0, 5), base);
        let mut bad = spec(TransformKind::SubstitutionCipher);
        bad.remap = 1;
        assert!(bad.validate().is_err());
    }
}
