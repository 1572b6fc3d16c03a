//! Corpus manifests and the versioned language-spec file.
//!
//! Corpus manifest: `pair_id<TAB>src_lang<TAB>tgt_lang<TAB>src_units<TAB>
//! tgt_units` with space-separated units. Language spec: `key = value`
//! lines under a `format = utut-langspec/1` header; unknown keys rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::generate::{ParallelCorpus, ParallelPair};
use super::lang::{ReorderRule, ToyLanguage, ToyLanguageSpec};
use crate::codec::io::parse_units;
use crate::codec::UnitSequence;
use crate::error::{Error, Result};

pub const LANGSPEC_FORMAT: &str = "utut-langspec/1";

pub fn write_corpus_manifest(path: &Path, corpus: &ParallelCorpus, header: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    if let Some(h) = header {
        writeln!(w, "# {h}").map_err(io_err)?;
    }
    for pair in corpus {
        let src: Vec<String> = pair.src.units.iter().map(|u| u.to_string()).collect();
        let tgt: Vec<String> = pair.tgt.units.iter().map(|u| u.to_string()).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            pair.src.utt_id,
            pair.src.lang,
            pair.tgt.lang,
            src.join(" "),
            tgt.join(" ")
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_corpus_manifest(path: &Path) -> Result<ParallelCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pstr = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&*pstr, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                &pstr,
                format!("line {}: expected 5 tab-separated fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let src_units = parse_units(fields[3])
            .map_err(|e| Error::format(&pstr, format!("line {}: {e}", lineno + 1)))?;
        let tgt_units = parse_units(fields[4])
            .map_err(|e| Error::format(&pstr, format!("line {}: {e}", lineno + 1)))?;
        out.push(ParallelPair::new(
            UnitSequence::new(fields[0], fields[1], src_units, true),
            UnitSequence::new(fields[0], fields[2], tgt_units, true),
        )?);
    }
    Ok(out)
}

pub fn write_language_spec(path: &Path, spec: &ToyLanguageSpec) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "format = {LANGSPEC_FORMAT}").map_err(io_err)?;
    writeln!(w, "concept_vocab_size = {}", spec.concept_vocab_size).map_err(io_err)?;
    writeln!(w, "unit_vocab_size = {}", spec.unit_vocab_size).map_err(io_err)?;
    writeln!(w, "seed = {}", spec.seed).map_err(io_err)?;
    let codes: Vec<&str> = spec.languages.iter().map(|l| l.code.as_str()).collect();
    writeln!(w, "languages = {}", codes.join(" ")).map_err(io_err)?;
    for lang in &spec.languages {
        let perm: Vec<String> = lang.permutation.iter().map(|u| u.to_string()).collect();
        writeln!(w, "lang.{}.permutation = {}", lang.code, perm.join(" ")).map_err(io_err)?;
        writeln!(w, "lang.{}.reorder = {}", lang.code, lang.reorder.name()).map_err(io_err)?;
        writeln!(w, "lang.{}.prefix = {}", lang.code, lang.prefix).map_err(io_err)?;
        writeln!(w, "lang.{}.suffix = {}", lang.code, lang.suffix).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_language_spec(path: &Path) -> Result<ToyLanguageSpec> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pstr = path.display().to_string();
    let mut kv: Vec<(String, String)> = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&*pstr, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::format(&pstr, format!("expected key = value, got {trimmed:?}")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }

    let get = |key: &str| -> Result<String> {
        kv.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::format(&pstr, format!("missing key {key}")))
    };
    if get("format")? != LANGSPEC_FORMAT {
        return Err(Error::format(&pstr, "unsupported langspec format"));
    }
    let concept_vocab_size: usize = parse_num(&get("concept_vocab_size")?, &pstr)?;
    let unit_vocab_size: usize = parse_num(&get("unit_vocab_size")?, &pstr)?;
    let seed: u64 = parse_num(&get("seed")?, &pstr)?;
    let codes: Vec<String> = get("languages")?
        .split_whitespace()
        .map(|s| s.to_string())
        .collect();

    let mut languages = Vec::with_capacity(codes.len());
    for code in &codes {
        let perm = parse_units(&get(&format!("lang.{code}.permutation"))?)
            .map_err(|e| Error::format(&pstr, e))?;
        let reorder = ReorderRule::parse(&get(&format!("lang.{code}.reorder"))?)?;
        let prefix: u32 = parse_num(&get(&format!("lang.{code}.prefix"))?, &pstr)?;
        let suffix: u32 = parse_num(&get(&format!("lang.{code}.suffix"))?, &pstr)?;
        languages.push(ToyLanguage {
            code: code.clone(),
            permutation: perm,
            reorder,
            prefix,
            suffix,
        });
    }

    // Reject unknown keys so stale configs fail loudly.
    let known: Vec<String> = ["format", "concept_vocab_size", "unit_vocab_size", "seed", "languages"]
        .iter()
        .map(|s| s.to_string())
        .chain(codes.iter().flat_map(|c| {
            ["permutation", "reorder", "prefix", "suffix"]
                .iter()
                .map(move |f| format!("lang.{c}.{f}"))
        }))
        .collect();
    for (k, _) in &kv {
        if !known.contains(k) {
            return Err(Error::format(&pstr, format!("unknown key {k}")));
        }
    }

    let spec = ToyLanguageSpec {
        concept_vocab_size,
        unit_vocab_size,
        seed,
        languages,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::format(path, format!("bad number {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate::{generate_toy_corpus, CorpusConfig};

    #[test]
    fn language_spec_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("langs.spec");
        let spec = ToyLanguageSpec::generate(4, 12, 24, 3).unwrap();
        write_language_spec(&path, &spec).unwrap();
        let back = read_language_spec(&path).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("langs.spec");
        let spec = ToyLanguageSpec::generate(2, 6, 12, 3).unwrap();
        write_language_spec(&path, &spec).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("mystery_knob = 7\n");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_language_spec(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn corpus_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        let spec = ToyLanguageSpec::generate(2, 8, 16, 3).unwrap();
        let corpus = generate_toy_corpus(
            &spec,
            &CorpusConfig {
                n_sentences: 10,
                len_range: (3, 6),
                directions: vec![("A".into(), "B".into())],
                n_heldout: 0,
                seed: 0,
            },
        )
        .unwrap();
        write_corpus_manifest(&path, &corpus.train, Some("config_hash=abc")).unwrap();
        let back = read_corpus_manifest(&path).unwrap();
        assert_eq!(back, corpus.train);
    }
}
