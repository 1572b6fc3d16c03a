//! Toy languages: each language renders a latent concept sequence into a
//! surface unit sequence through a symbol permutation, a deterministic
//! window-2 reorder keyed by concept parity, and language-specific affix
//! units. Rendering is bijective, so exact translation references exist
//! for every language pair by pivoting through the concept sequence.

use rand_chacha::ChaCha20Rng;

use crate::codec::UnitSequence;
use crate::error::{Error, Result};
use crate::rng::shuffle;

/// Window-2 reorder rule over disjoint windows (0,1), (2,3), ...
/// A window swaps when the parity of its concept sum matches the rule.
/// The sum is invariant under the swap, which keeps decoding exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReorderRule {
    None,
    SwapIfSumEven,
    SwapIfSumOdd,
}

impl ReorderRule {
    fn swaps(&self, a: u32, b: u32) -> bool {
        match self {
            ReorderRule::None => false,
            ReorderRule::SwapIfSumEven => (a + b) % 2 == 0,
            ReorderRule::SwapIfSumOdd => (a + b) % 2 == 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReorderRule::None => "none",
            ReorderRule::SwapIfSumEven => "swap_even",
            ReorderRule::SwapIfSumOdd => "swap_odd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ReorderRule::None),
            "swap_even" => Ok(ReorderRule::SwapIfSumEven),
            "swap_odd" => Ok(ReorderRule::SwapIfSumOdd),
            other => Err(Error::InvalidLanguageSpec(format!(
                "unknown reorder rule {other:?}"
            ))),
        }
    }
}

/// One toy language: a bijection from concepts to content units plus a
/// reorder rule and affix units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyLanguage {
    pub code: String,
    /// concept id -> content unit id; bijective over [0, C).
    pub permutation: Vec<u32>,
    pub reorder: ReorderRule,
    pub prefix: u32,
    pub suffix: u32,
}

/// The full language set sharing one concept alphabet and unit vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyLanguageSpec {
    pub concept_vocab_size: usize,
    pub unit_vocab_size: usize,
    pub seed: u64,
    pub languages: Vec<ToyLanguage>,
}

impl ToyLanguageSpec {
    /// Validates bijectivity of every permutation, affix disjointness from
    /// content ids, and unit-vocabulary bounds.
    pub fn validate(&self) -> Result<()> {
        let c = self.concept_vocab_size;
        let k = self.unit_vocab_size as u32;
        if self.languages.len() < 2 {
            return Err(Error::InvalidLanguageSpec(
                "need at least 2 languages".into(),
            ));
        }
        let mut codes = std::collections::HashSet::new();
        for lang in &self.languages {
            if !codes.insert(lang.code.clone()) {
                return Err(Error::InvalidLanguageSpec(format!(
                    "duplicate language code {}",
                    lang.code
                )));
            }
            if lang.permutation.len() != c {
                return Err(Error::InvalidLanguageSpec(format!(
                    "language {}: permutation length {} != concept vocab {c}",
                    lang.code,
                    lang.permutation.len()
                )));
            }
            let mut seen = vec![false; k as usize];
            for &u in &lang.permutation {
                if u >= k {
                    return Err(Error::InvalidLanguageSpec(format!(
                        "language {}: content unit {u} outside unit vocab {k}",
                        lang.code
                    )));
                }
                if seen[u as usize] {
                    return Err(Error::InvalidLanguageSpec(format!(
                        "language {}: permutation not bijective at unit {u}",
                        lang.code
                    )));
                }
                seen[u as usize] = true;
            }
            for affix in [lang.prefix, lang.suffix] {
                if affix >= k {
                    return Err(Error::InvalidLanguageSpec(format!(
                        "language {}: affix {affix} outside unit vocab {k}",
                        lang.code
                    )));
                }
                if seen[affix as usize] {
                    return Err(Error::InvalidLanguageSpec(format!(
                        "language {}: affix {affix} collides with content units",
                        lang.code
                    )));
                }
            }
            if lang.prefix == lang.suffix {
                return Err(Error::InvalidLanguageSpec(format!(
                    "language {}: prefix and suffix must differ",
                    lang.code
                )));
            }
        }
        Ok(())
    }

    /// Seeded construction: permutations are shuffles of the shared content
    /// block [0, C); affixes take ids C+2i, C+2i+1; reorder rules cycle
    /// through the three variants so languages differ in word order.
    pub fn generate(n_langs: usize, concept_vocab_size: usize, unit_vocab_size: usize, seed: u64) -> Result<Self> {
        if n_langs < 2 {
            return Err(Error::InvalidLanguageSpec("need at least 2 languages".into()));
        }
        if n_langs > 26 {
            return Err(Error::InvalidLanguageSpec("at most 26 generated languages".into()));
        }
        if unit_vocab_size < concept_vocab_size + 2 * n_langs {
            return Err(Error::InvalidLanguageSpec(format!(
                "unit vocab {unit_vocab_size} too small for {concept_vocab_size} concepts + {} affixes",
                2 * n_langs
            )));
        }
        let mut rng = crate::rng::derive_rng(seed, crate::rng::streams::CORPUS);
        let rules = [
            ReorderRule::SwapIfSumEven,
            ReorderRule::SwapIfSumOdd,
            ReorderRule::None,
        ];
        let languages = (0..n_langs)
            .map(|i| {
                let mut perm: Vec<u32> = (0..concept_vocab_size as u32).collect();
                shuffle(&mut perm, &mut rng);
                ToyLanguage {
                    code: ((b'A' + i as u8) as char).to_string(),
                    permutation: perm,
                    reorder: rules[i % rules.len()],
                    prefix: (concept_vocab_size + 2 * i) as u32,
                    suffix: (concept_vocab_size + 2 * i + 1) as u32,
                }
            })
            .collect();
        let spec = ToyLanguageSpec {
            concept_vocab_size,
            unit_vocab_size,
            seed,
            languages,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn language(&self, code: &str) -> Result<&ToyLanguage> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn codes(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.code.clone()).collect()
    }

    /// Renders a concept sequence into the given language's unit sequence.
    pub fn render(&self, concepts: &[u32], code: &str) -> Result<UnitSequence> {
        self.render_with_id(concepts, code, "")
    }

    pub fn render_with_id(&self, concepts: &[u32], code: &str, utt_id: &str) -> Result<UnitSequence> {
        let lang = self.language(code)?;
        for &c in concepts {
            if c as usize >= self.concept_vocab_size {
                return Err(Error::InvalidInput(format!(
                    "concept {c} outside alphabet of size {}",
                    self.concept_vocab_size
                )));
            }
        }
        let reordered = apply_reorder(concepts, lang.reorder);
        let mut units = Vec::with_capacity(concepts.len() + 2);
        units.push(lang.prefix);
        units.extend(reordered.iter().map(|&c| lang.permutation[c as usize]));
        units.push(lang.suffix);
        Ok(UnitSequence::new(utt_id, code, units, true))
    }

    /// Per-position concept alignment for a rendered sequence: affix
    /// positions carry None, content positions their concept id.
    pub fn alignment(&self, seq: &UnitSequence) -> Result<Vec<Option<u32>>> {
        let concepts_reordered = self.decode_reordered(&seq.units, &seq.lang)?;
        let mut out = Vec::with_capacity(seq.units.len());
        out.push(None);
        out.extend(concepts_reordered.into_iter().map(Some));
        out.push(None);
        Ok(out)
    }

    /// Decodes a rendered sequence back to its concept sequence.
    pub fn decode(&self, seq: &UnitSequence, code: &str) -> Result<Vec<u32>> {
        let reordered = self.decode_reordered(&seq.units, code)?;
        let lang = self.language(code)?;
        Ok(apply_reorder(&reordered, lang.reorder))
    }

    /// Strips affixes and inverse-permutes, leaving concepts still in the
    /// language's surface order.
    fn decode_reordered(&self, units: &[u32], code: &str) -> Result<Vec<u32>> {
        let lang = self.language(code)?;
        if units.len() < 3 || units[0] != lang.prefix || *units.last().unwrap() != lang.suffix {
            let bad = *units.first().unwrap_or(&0);
            return Err(Error::NotInSourceLanguage {
                token: if units.first() == Some(&lang.prefix) {
                    *units.last().unwrap_or(&bad)
                } else {
                    bad
                },
                lang: code.to_string(),
            });
        }
        let mut inverse = vec![u32::MAX; self.unit_vocab_size];
        for (c, &u) in lang.permutation.iter().enumerate() {
            inverse[u as usize] = c as u32;
        }
        units[1..units.len() - 1]
            .iter()
            .map(|&u| {
                let c = inverse.get(u as usize).copied().unwrap_or(u32::MAX);
                if c == u32::MAX {
                    Err(Error::NotInSourceLanguage {
                        token: u,
                        lang: code.to_string(),
                    })
                } else {
                    Ok(c)
                }
            })
            .collect()
    }

    /// Exact translation by pivoting through the concept sequence. Errors
    /// if `seq` is not a valid rendering in `src`.
    pub fn translate_oracle(&self, seq: &UnitSequence, src: &str, tgt: &str) -> Result<UnitSequence> {
        let concepts = self.decode(seq, src)?;
        let mut out = self.render_with_id(&concepts, tgt, &seq.utt_id)?;
        out.utt_id = seq.utt_id.clone();
        Ok(out)
    }

    /// True when the concept sentence renders without adjacent duplicates
    /// in every language (the permutations preserve distinctness, so only
    /// reorder boundaries need checking).
    pub fn renders_cleanly(&self, concepts: &[u32]) -> bool {
        if concepts.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        self.languages.iter().all(|lang| {
            let reordered = apply_reorder(concepts, lang.reorder);
            reordered.windows(2).all(|w| w[0] != w[1])
        })
    }
}

/// The reorder is an involution: applying it twice restores the input.
fn apply_reorder(concepts: &[u32], rule: ReorderRule) -> Vec<u32> {
    let mut out = concepts.to_vec();
    let mut i = 0;
    while i + 1 < out.len() {
        if rule.swaps(out[i], out[i + 1]) {
            out.swap(i, i + 1);
        }
        i += 2;
    }
    out
}
