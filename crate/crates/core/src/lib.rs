//! Desk-scale laboratory for unit-to-unit translation: a k-means unit codec,
//! synthetic many-to-many parallel corpora with exact translation oracles, a
//! transformer encoder-decoder with language-token conditioning and exact
//! gradients, the training recipe (span masking, Adam, warmup + linear
//! decay), greedy/beam decoding, a text front-end transfer path, and
//! evaluation (BLEU, CER, zero-shot pair grids).

pub mod codec;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod text;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
