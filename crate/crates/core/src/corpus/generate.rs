//! Synthetic parallel corpus generation over toy languages, plus the
//! reverse-direction augmentation.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::lang::ToyLanguageSpec;
use crate::codec::UnitSequence;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams};

/// A source/target utterance pair; both sides deduped, languages differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub src: UnitSequence,
    pub tgt: UnitSequence,
}

impl ParallelPair {
    pub fn new(src: UnitSequence, tgt: UnitSequence) -> Result<Self> {
        if src.lang == tgt.lang {
            return Err(Error::InvalidInput(format!(
                "parallel pair requires distinct languages, both are {}",
                src.lang
            )));
        }
        if src.units.is_empty() || tgt.units.is_empty() {
            return Err(Error::EmptyInput("parallel pair side".into()));
        }
        Ok(ParallelPair { src, tgt })
    }

    pub fn direction(&self) -> (String, String) {
        (self.src.lang.clone(), self.tgt.lang.clone())
    }
}

pub type ParallelCorpus = Vec<ParallelPair>;

/// Corpus generation parameters. Directions are ordered (src, tgt) pairs;
/// sentences are assigned to directions round-robin so coverage stays even.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_sentences: usize,
    pub len_range: (usize, usize),
    pub directions: Vec<(String, String)>,
    pub n_heldout: usize,
    pub seed: u64,
}

/// A generated corpus: training pairs plus held-out concept sentences that
/// never appear in training (for validation and test rendering).
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub train: ParallelCorpus,
    pub heldout_concepts: Vec<Vec<u32>>,
}

/// All ordered cross-language directions for the spec's languages.
pub fn all_directions(spec: &ToyLanguageSpec) -> Vec<(String, String)> {
    let codes = spec.codes();
    let mut out = Vec::new();
    for s in &codes {
        for t in &codes {
            if s != t {
                out.push((s.clone(), t.clone()));
            }
        }
    }
    out
}

/// Generates concept sentences, renders each into its direction's two
/// languages, and returns the pairs plus held-out sentences. Deterministic
/// given (spec, config).
pub fn generate_toy_corpus(spec: &ToyLanguageSpec, cfg: &CorpusConfig) -> Result<GeneratedCorpus> {
    spec.validate()?;
    if cfg.directions.is_empty() {
        return Err(Error::InvalidConfig("no language-pair directions".into()));
    }
    for (s, t) in &cfg.directions {
        spec.language(s)?;
        spec.language(t)?;
        if s == t {
            return Err(Error::InvalidConfig(format!(
                "direction {s}->{t} is not a translation"
            )));
        }
    }
    let (lo, hi) = cfg.len_range;
    if lo < 2 || hi < lo {
        return Err(Error::InvalidConfig(format!(
            "bad length range {lo}..={hi}"
        )));
    }

    let mut rng = derive_rng(cfg.seed, streams::CORPUS);
    let mut train_sentences: std::collections::HashSet<Vec<u32>> = std::collections::HashSet::new();

    let mut train = Vec::with_capacity(cfg.n_sentences);
    for i in 0..cfg.n_sentences {
        let concepts = draw_sentence(spec, &mut rng, lo, hi);
        train_sentences.insert(concepts.clone());
        let (src_lang, tgt_lang) = &cfg.directions[i % cfg.directions.len()];
        let src = spec.render_with_id(&concepts, src_lang, &format!("train-{i}"))?;
        let tgt = spec.render_with_id(&concepts, tgt_lang, &format!("train-{i}"))?;
        train.push(ParallelPair::new(src, tgt)?);
    }

    let mut heldout_concepts = Vec::with_capacity(cfg.n_heldout);
    let mut attempts = 0usize;
    while heldout_concepts.len() < cfg.n_heldout {
        let concepts = draw_sentence(spec, &mut rng, lo, hi);
        if !train_sentences.contains(&concepts) {
            heldout_concepts.push(concepts);
        }
        attempts += 1;
        if attempts > cfg.n_heldout * 1000 + 1000 {
            return Err(Error::InvalidConfig(
                "cannot draw held-out sentences disjoint from training; enlarge the sentence space".into(),
            ));
        }
    }

    Ok(GeneratedCorpus {
        train,
        heldout_concepts,
    })
}

/// Rejection-samples a concept sentence that renders without adjacent
/// duplicates in every language.
fn draw_sentence(spec: &ToyLanguageSpec, rng: &mut ChaCha20Rng, lo: usize, hi: usize) -> Vec<u32> {
    let c = spec.concept_vocab_size as u32;
    loop {
        let len = rng.random_range(lo..=hi);
        let sentence: Vec<u32> = (0..len).map(|_| rng.random_range(0..c)).collect();
        if spec.renders_cleanly(&sentence) {
            return sentence;
        }
    }
}

/// Adds the opposite direction of every pair; the corpus size exactly
/// doubles. Applying this twice quadruples — callers own that invariant.
pub fn augment_bidirectional(corpus: ParallelCorpus) -> ParallelCorpus {
    let mut out = Vec::with_capacity(corpus.len() * 2);
    let reversed: Vec<ParallelPair> = corpus
        .iter()
        .map(|p| ParallelPair {
            src: p.tgt.clone(),
            tgt: p.src.clone(),
        })
        .collect();
    out.extend(corpus);
    out.extend(reversed);
    out
}
