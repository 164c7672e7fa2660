//! Synthetic parallel corpora, vocabularies and token-budgeted batching.

mod batch;
mod corpus;
mod vocab;

pub use batch::{batches, BatchStream};
pub use corpus::{
    gen_corpus, gen_corpus_with_cipher, Cipher, EncodedCorpus, Example, ParallelCorpus, Splits,
    TaskSpec, TextPair, TransformKind, ALPHABET,
};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// A sequence of token ids.
pub type Sentence = Vec<usize>;
