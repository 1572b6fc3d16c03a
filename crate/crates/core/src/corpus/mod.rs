//! Synthetic many-to-many parallel corpora with exact translation oracles,
//! bidirectional augmentation, and token-budget batching.

mod batch;
mod generate;
pub mod io;
mod lang;

pub use batch::{make_batches, Batch};
pub use generate::{
    all_directions, augment_bidirectional, generate_toy_corpus, CorpusConfig, GeneratedCorpus,
    ParallelCorpus, ParallelPair,
};
pub use lang::{ReorderRule, ToyLanguage, ToyLanguageSpec};
