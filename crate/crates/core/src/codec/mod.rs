//! Unit codec: turns continuous feature streams into deduplicated discrete
//! unit sequences through a k-means codebook, and back (pseudo-resynthesis
//! for round-trip testing).

mod kmeans;
pub mod io;

pub use kmeans::{fit_codebook, FitStats};

use ndarray::Array2;

use crate::error::{Error, Result};

/// A continuous feature stream for one utterance, frames x dims.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    pub utt_id: String,
    pub lang: String,
    pub frames: Array2<f64>,
    /// Informational frames-per-second; not used by the codec math.
    pub frame_rate: f64,
}

impl FeatureStream {
    pub fn new(utt_id: impl Into<String>, lang: impl Into<String>, frames: Array2<f64>) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::EmptyInput("feature stream has no frames".into()));
        }
        if !frames.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature stream".into(),
            });
        }
        Ok(FeatureStream {
            utt_id: utt_id.into(),
            lang: lang.into(),
            frames,
            frame_rate: 50.0,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// K centroids defining the quantizer.
#[derive(Debug, Clone)]
pub struct Codebook {
    centroids: Array2<f64>,
    seed: u64,
    fit_stats: FitStats,
}

impl Codebook {
    /// Validates finiteness, K >= 2, and pairwise-distinct centroids.
    pub fn new(centroids: Array2<f64>, seed: u64, fit_stats: FitStats) -> Result<Self> {
        let k = centroids.nrows();
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "codebook needs at least 2 centroids, got {k}"
            )));
        }
        if !centroids.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "codebook centroids".into(),
            });
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if centroids.row(i) == centroids.row(j) {
                    return Err(Error::InvalidInput(format!(
                        "centroids {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(Codebook {
            centroids,
            seed,
            fit_stats,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn fit_stats(&self) -> &FitStats {
        &self.fit_stats
    }
}

/// An utterance as discrete unit ids with a language tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence {
    pub utt_id: String,
    pub lang: String,
    pub units: Vec<u32>,
    pub deduped: bool,
}

impl UnitSequence {
    pub fn new(utt_id: impl Into<String>, lang: impl Into<String>, units: Vec<u32>, deduped: bool) -> Self {
        UnitSequence {
            utt_id: utt_id.into(),
            lang: lang.into(),
            units,
            deduped,
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Assigns every frame to its nearest centroid under squared Euclidean
/// distance, ties broken by lowest centroid index. Length-preserving.
pub fn quantize(stream: &FeatureStream, cb: &Codebook) -> Result<UnitSequence> {
    if stream.dim() != cb.dim() {
        return Err(Error::DimMismatch {
            context: "quantize: feature dim vs codebook dim".into(),
            expected: cb.dim(),
            got: stream.dim(),
        });
    }
    let units = stream
        .frames
        .rows()
        .into_iter()
        .map(|frame| nearest_centroid(frame.as_slice().expect("contiguous row"), cb) as u32)
        .collect();
    Ok(UnitSequence::new(
        stream.utt_id.clone(),
        stream.lang.clone(),
        units,
        false,
    ))
}

/// Nearest centroid by squared distance; scanning in index order with a
/// strict `<` keeps the lowest index on ties.
pub(crate) fn nearest_centroid(frame: &[f64], cb: &Codebook) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, c) in cb.centroids.rows().into_iter().enumerate() {
        let d = sq_dist(frame, c.as_slice().expect("contiguous row"));
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Collapses maximal runs of equal adjacent units to one occurrence.
pub fn deduplicate(seq: &UnitSequence) -> Result<UnitSequence> {
    if seq.units.is_empty() {
        return Err(Error::EmptyInput("deduplicate: empty unit sequence".into()));
    }
    let mut units = Vec::with_capacity(seq.units.len());
    for &u in &seq.units {
        if units.last() != Some(&u) {
            units.push(u);
        }
    }
    Ok(UnitSequence::new(seq.utt_id.clone(), seq.lang.clone(), units, true))
}

/// Pseudo-resynthesis: each unit emits its centroid `dwell` times.
pub fn expand(seq: &UnitSequence, cb: &Codebook, dwell: usize) -> Result<FeatureStream> {
    if seq.units.is_empty() {
        return Err(Error::EmptyInput("expand: empty unit sequence".into()));
    }
    if dwell == 0 {
        return Err(Error::InvalidInput("expand: dwell must be >= 1".into()));
    }
    for &u in &seq.units {
        if u as usize >= cb.k() {
            return Err(Error::UnitOutOfRange { unit: u, k: cb.k() });
        }
    }
    let t = seq.units.len() * dwell;
    let mut frames = Array2::zeros((t, cb.dim()));
    for (i, &u) in seq.units.iter().enumerate() {
        for d in 0..dwell {
            frames.row_mut(i * dwell + d).assign(&cb.centroids.row(u as usize));
        }
    }
    FeatureStream::new(seq.utt_id.clone(), seq.lang.clone(), frames)
}

/// Occurrence counts per unit id over deduped sequences of one language,
/// sorted by count descending then id ascending.
pub fn unit_histogram(corpus: &[UnitSequence], lang: &str) -> Result<Vec<(u32, u64)>> {
    let mut counts: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
    let mut seen_lang = false;
    for seq in corpus.iter().filter(|s| s.lang == lang) {
        seen_lang = true;
        let deduped;
        let units = if seq.deduped {
            &seq.units
        } else {
            deduped = deduplicate(seq)?;
            &deduped.units
        };
        for &u in units {
            *counts.entry(u).or_insert(0) += 1;
        }
    }
    if !seen_lang {
        return Err(Error::UnknownLanguage(lang.to_string()));
    }
    let mut out: Vec<(u32, u64)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cb2() -> Codebook {
        Codebook::new(array![[0.0, 0.0], [2.0, 0.0]], 0, FitStats::default()).unwrap()
    }

    #[test]
    fn quantize_centroids_self_assign() {
        let cb = Codebook::new(
            array![[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]],
            0,
            FitStats::default(),
        )
        .unwrap();
        let stream = FeatureStream::new("u", "A", cb.centroids().clone()).unwrap();
        let seq = quantize(&stream, &cb).unwrap();
        assert_eq!(seq.units, vec![0, 1, 2]);
        assert!(!seq.deduped);
    }

    #[test]
    fn quantize_tie_breaks_to_lowest_index() {
        // (1, 0) is exactly distance 1 from both centroids.
        let cb = cb2();
        let stream = FeatureStream::new("u", "A", array![[1.0, 0.0]]).unwrap();
        let seq = quantize(&stream, &cb).unwrap();
        assert_eq!(seq.units, vec![0]);
    }

    #[test]
    fn quantize_dim_mismatch_errors() {
        let cb = cb2();
        let stream = FeatureStream::new("u", "A", array![[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(quantize(&stream, &cb), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn dedup_collapses_runs() {
        let seq = UnitSequence::new("u", "A", vec![7, 7, 7, 3, 3, 9], false);
        let out = deduplicate(&seq).unwrap();
        assert_eq!(out.units, vec![7, 3, 9]);
        assert!(out.deduped);
    }

    #[test]
    fn dedup_keeps_alternations() {
        let seq = UnitSequence::new("u", "A", vec![1, 2, 1, 2], false);
        assert_eq!(deduplicate(&seq).unwrap().units, vec![1, 2, 1, 2]);
    }

    #[test]
    fn dedup_empty_errors() {
        let seq = UnitSequence::new("u", "A", vec![], false);
        assert!(deduplicate(&seq).is_err());
    }

    #[test]
    fn expand_repeats_centroid() {
        let cb = cb2();
        let seq = UnitSequence::new("u", "A", vec![1], true);
        let stream = expand(&seq, &cb, 2).unwrap();
        assert_eq!(stream.num_frames(), 2);
        assert_eq!(stream.frames.row(0).to_vec(), vec![2.0, 0.0]);
        assert_eq!(stream.frames.row(1).to_vec(), vec![2.0, 0.0]);
    }

    #[test]
    fn expand_rejects_out_of_range_unit() {
        let cb = cb2();
        let seq = UnitSequence::new("u", "A", vec![5], true);
        assert!(matches!(
            expand(&seq, &cb, 1),
            Err(Error::UnitOutOfRange { unit: 5, k: 2 })
        ));
    }

    #[test]
    fn expand_empty_errors() {
        let cb = cb2();
        let seq = UnitSequence::new("u", "A", vec![], true);
        assert!(expand(&seq, &cb, 4).is_err());
    }

    #[test]
    fn round_trip_recovers_deduped_sequence() {
        let cb = cb2();
        let seq = UnitSequence::new("u", "A", vec![0, 1, 0], true);
        let frames = expand(&seq, &cb, 4).unwrap();
        let back = deduplicate(&quantize(&frames, &cb).unwrap()).unwrap();
        assert_eq!(back.units, seq.units);
    }

    #[test]
    fn histogram_counts_and_orders() {
        let corpus = vec![UnitSequence::new("u", "A", vec![1, 2, 1], true)];
        let h = unit_histogram(&corpus, "A").unwrap();
        assert_eq!(h, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn histogram_filters_language() {
        let corpus = vec![
            UnitSequence::new("u1", "A", vec![5], true),
            UnitSequence::new("u2", "B", vec![6, 6, 6], false),
        ];
        let h = unit_histogram(&corpus, "B").unwrap();
        assert_eq!(h, vec![(6, 1)]);
        assert!(unit_histogram(&corpus, "C").is_err());
    }

    #[test]
    fn histogram_tie_on_count_orders_by_id() {
        let corpus = vec![UnitSequence::new("u", "A", vec![9, 4, 9, 4], true)];
        let h = unit_histogram(&corpus, "A").unwrap();
        assert_eq!(h, vec![(4, 2), (9, 2)]);
    }

    #[test]
    fn codebook_rejects_duplicate_centroids() {
        let r = Codebook::new(array![[1.0, 1.0], [1.0, 1.0]], 0, FitStats::default());
        assert!(r.is_err());
    }

    #[test]
    fn feature_stream_rejects_non_finite() {
        assert!(FeatureStream::new("u", "A", array![[f64::NAN]]).is_err());
    }
}
