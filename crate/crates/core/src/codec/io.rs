//! On-disk formats for the codec: feature files, codebook files, and the
//! unit manifest TSV.
//!
//! Feature file: `UFEA`, version u32, D u32, T u32, then T*D little-endian
//! f32 values row-major. Codebook file: `UCBK`, version u32, K u32, D u32,
//! seed u64, then K*D little-endian f32. Unit manifest: one utterance per
//! line, `utt_id<TAB>lang<TAB>u1 u2 u3 ...`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Codebook, FeatureStream, FitStats, UnitSequence};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"UFEA";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"UCBK";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_features(path: &Path, stream: &FeatureStream) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(FEATURE_MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(stream.dim() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(stream.num_frames() as u32).to_le_bytes()).map_err(io_err)?;
    for v in stream.frames.iter() {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_features(path: &Path, utt_id: &str, lang: &str) -> Result<FeatureStream> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let pstr = path.display().to_string();

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &pstr)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::format(&pstr, "bad magic, expected UFEA"));
    }
    let version = read_u32(&mut r, &pstr)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let d = read_u32(&mut r, &pstr)? as usize;
    let t = read_u32(&mut r, &pstr)? as usize;
    let mut data = Vec::with_capacity(t * d);
    for _ in 0..t * d {
        data.push(read_f32(&mut r, &pstr)? as f64);
    }
    let frames = Array2::from_shape_vec((t, d), data)
        .map_err(|e| Error::format(&pstr, e.to_string()))?;
    FeatureStream::new(utt_id, lang, frames)
}

pub fn write_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(CODEBOOK_MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cb.k() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cb.dim() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&cb.seed().to_le_bytes()).map_err(io_err)?;
    for v in cb.centroids().iter() {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let pstr = path.display().to_string();

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &pstr)?;
    if &magic != CODEBOOK_MAGIC {
        return Err(Error::format(&pstr, "bad magic, expected UCBK"));
    }
    let version = read_u32(&mut r, &pstr)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let k = read_u32(&mut r, &pstr)? as usize;
    let d = read_u32(&mut r, &pstr)? as usize;
    let mut seed_bytes = [0u8; 8];
    read_exact(&mut r, &mut seed_bytes, &pstr)?;
    let seed = u64::from_le_bytes(seed_bytes);
    let mut data = Vec::with_capacity(k * d);
    for _ in 0..k * d {
        data.push(read_f32(&mut r, &pstr)? as f64);
    }
    let centroids = Array2::from_shape_vec((k, d), data)
        .map_err(|e| Error::format(&pstr, e.to_string()))?;
    Codebook::new(centroids, seed, FitStats::default())
}

/// Writes a unit manifest. Lines starting with `#` are treated as comments
/// by the reader, so callers may prepend provenance lines.
pub fn write_unit_manifest(path: &Path, sequences: &[UnitSequence], header: Option<&str>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    if let Some(h) = header {
        writeln!(w, "# {h}").map_err(io_err)?;
    }
    for seq in sequences {
        let units: Vec<String> = seq.units.iter().map(|u| u.to_string()).collect();
        writeln!(w, "{}\t{}\t{}", seq.utt_id, seq.lang, units.join(" ")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_unit_manifest(path: &Path) -> Result<Vec<UnitSequence>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pstr = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&*pstr, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let utt_id = fields
            .next()
            .ok_or_else(|| Error::format(&pstr, format!("line {}: missing utt_id", lineno + 1)))?;
        let lang = fields
            .next()
            .ok_or_else(|| Error::format(&pstr, format!("line {}: missing lang", lineno + 1)))?;
        let units_str = fields
            .next()
            .ok_or_else(|| Error::format(&pstr, format!("line {}: missing units", lineno + 1)))?;
        let units = parse_units(units_str)
            .map_err(|e| Error::format(&pstr, format!("line {}: {e}", lineno + 1)))?;
        out.push(UnitSequence::new(utt_id, lang, units, true));
    }
    Ok(out)
}

pub(crate) fn parse_units(s: &str) -> std::result::Result<Vec<u32>, String> {
    s.split_whitespace()
        .map(|t| t.parse::<u32>().map_err(|_| format!("bad unit id {t:?}")))
        .collect()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::format(path, "truncated file"))
}

fn read_u32<R: Read>(r: &mut R, path: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R, path: &str) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(f32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ufea");
        let stream = FeatureStream::new("u1", "A", array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        write_features(&path, &stream).unwrap();
        let back = read_features(&path, "u1", "A").unwrap();
        assert_eq!(back.frames, stream.frames);
    }

    #[test]
    fn codebook_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ucbk");
        let cb = Codebook::new(array![[0.5, -1.0], [2.0, 3.5]], 99, FitStats::default()).unwrap();
        write_codebook(&path, &cb).unwrap();
        let back = read_codebook(&path).unwrap();
        assert_eq!(back.k(), 2);
        assert_eq!(back.seed(), 99);
        assert_eq!(back.centroids(), cb.centroids());
    }

    #[test]
    fn bad_magic_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ucbk");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_codebook(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_file_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ufea");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(FEATURE_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&10u32.to_le_bytes());
        // no payload
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_features(&path, "u", "A"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn unit_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("units.tsv");
        let seqs = vec![
            UnitSequence::new("u1", "A", vec![1, 2, 3], true),
            UnitSequence::new("u2", "B", vec![9], true),
        ];
        write_unit_manifest(&path, &seqs, Some("config_hash=deadbeef")).unwrap();
        let back = read_unit_manifest(&path).unwrap();
        assert_eq!(back, seqs);
    }
}
