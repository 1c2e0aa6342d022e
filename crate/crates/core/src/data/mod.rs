//! Vocabularies, parallel corpora and synthetic toy tasks.

mod corpus;
mod synthetic;
mod vocab;

pub use corpus::{load_lines, load_parallel, write_lines, ParallelCorpus};
pub use synthetic::{gen_synthetic, Task, MARKER_EVEN, MARKER_ODD};
pub use vocab::{
    build_vocab, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, SPECIALS, UNK, UNK_ID,
};
