//! Unified token id space: base tokens (units or phonemes), then PAD, EOS,
//! MASK, then one token per language.

use crate::error::{Error, Result};

/// Identifies a language within a corpus and its token in the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LanguageTag {
    pub code: String,
    pub token_id: u32,
}

/// Token id layout over a base alphabet of size `base`:
/// ids `[0, base)` are content tokens, then PAD, EOS, MASK, then language
/// tokens in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    base: u32,
    lang_codes: Vec<String>,
}

impl Vocabulary {
    pub fn new(base: usize, lang_codes: &[String]) -> Self {
        Vocabulary {
            base: base as u32,
            lang_codes: lang_codes.to_vec(),
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn pad(&self) -> u32 {
        self.base
    }

    pub fn eos(&self) -> u32 {
        self.base + 1
    }

    pub fn mask(&self) -> u32 {
        self.base + 2
    }

    pub fn num_languages(&self) -> usize {
        self.lang_codes.len()
    }

    pub fn lang_codes(&self) -> &[String] {
        &self.lang_codes
    }

    /// Total number of token ids (base + 3 specials + languages).
    pub fn size(&self) -> usize {
        self.base as usize + 3 + self.lang_codes.len()
    }

    pub fn lang_token(&self, code: &str) -> Result<u32> {
        self.lang_codes
            .iter()
            .position(|c| c == code)
            .map(|i| self.base + 3 + i as u32)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn lang_tag(&self, code: &str) -> Result<LanguageTag> {
        Ok(LanguageTag {
            code: code.to_string(),
            token_id: self.lang_token(code)?,
        })
    }

    pub fn is_special(&self, id: u32) -> bool {
        id >= self.base
    }

    pub fn is_lang_token(&self, id: u32) -> bool {
        id >= self.base + 3 && (id as usize) < self.size()
    }
}
