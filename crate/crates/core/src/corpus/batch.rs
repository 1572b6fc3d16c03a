//! Token-budget batching: length-bucketed, seeded-shuffled, greedy-filled
//! batches where neither side exceeds the token budget.

use ndarray::Array2;

use super::generate::ParallelPair;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, shuffle, streams};
use crate::vocab::Vocabulary;

/// One padded batch. Source rows are `<L_s> units EOS`, target input rows
/// `<L_t> units`, target output rows `units EOS`; masks flag real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub src_tokens: Array2<u32>,
    pub src_mask: Array2<bool>,
    pub tgt_input: Array2<u32>,
    pub tgt_output: Array2<u32>,
    pub tgt_mask: Array2<bool>,
    pub utt_ids: Vec<String>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.src_tokens.nrows()
    }

    /// Count of real (non-pad) target positions, the loss denominator.
    pub fn target_token_count(&self) -> usize {
        self.tgt_mask.iter().filter(|&&m| m).count()
    }
}

/// Tokens a pair contributes to each side's budget: units + language token
/// + EOS.
fn side_cost(units: usize) -> usize {
    units + 2
}

/// Splits a corpus into budgeted batches. Pairs are stably sorted by
/// length, grouped into buckets of `sort_buckets` consecutive pairs,
/// shuffled within each bucket, greedily packed, and the final batch order
/// is shuffled again. Every pair appears exactly once; both sides of every
/// batch respect `max_tokens`.
pub fn make_batches(
    pairs: &[ParallelPair],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    max_tokens: usize,
    seed: u64,
    sort_buckets: usize,
) -> Result<Vec<Batch>> {
    for p in pairs {
        let need = side_cost(p.src.units.len()).max(side_cost(p.tgt.units.len()));
        if need > max_tokens {
            return Err(Error::BudgetExceeded {
                utt_id: p.src.utt_id.clone(),
                budget: max_tokens,
                needed: need,
            });
        }
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| {
        (
            side_cost(pairs[i].src.units.len()).max(side_cost(pairs[i].tgt.units.len())),
            i,
        )
    });

    let mut rng = derive_rng(seed, streams::BATCHING);
    let bucket = sort_buckets.max(1);
    for chunk in order.chunks_mut(bucket) {
        shuffle(chunk, &mut rng);
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let (mut src_used, mut tgt_used) = (0usize, 0usize);
    for &i in &order {
        let s = side_cost(pairs[i].src.units.len());
        let t = side_cost(pairs[i].tgt.units.len());
        if !current.is_empty() && (src_used + s > max_tokens || tgt_used + t > max_tokens) {
            groups.push(std::mem::take(&mut current));
            src_used = 0;
            tgt_used = 0;
        }
        current.push(i);
        src_used += s;
        tgt_used += t;
    }
    if !current.is_empty() {
        groups.push(current);
    }
    shuffle(&mut groups, &mut rng);

    groups
        .into_iter()
        .map(|group| build_batch(pairs, &group, src_vocab, tgt_vocab))
        .collect()
}

fn build_batch(
    pairs: &[ParallelPair],
    group: &[usize],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<Batch> {
    let src_w = group
        .iter()
        .map(|&i| pairs[i].src.units.len() + 2)
        .max()
        .unwrap_or(0);
    let tgt_w = group
        .iter()
        .map(|&i| pairs[i].tgt.units.len() + 1)
        .max()
        .unwrap_or(0);
    let rows = group.len();

    let mut src_tokens = Array2::from_elem((rows, src_w), src_vocab.pad());
    let mut src_mask = Array2::from_elem((rows, src_w), false);
    let mut tgt_input = Array2::from_elem((rows, tgt_w), tgt_vocab.pad());
    let mut tgt_output = Array2::from_elem((rows, tgt_w), tgt_vocab.pad());
    let mut tgt_mask = Array2::from_elem((rows, tgt_w), false);
    let mut utt_ids = Vec::with_capacity(rows);

    for (r, &i) in group.iter().enumerate() {
        let pair = &pairs[i];
        let src_lang = src_vocab.lang_token(&pair.src.lang)?;
        let tgt_lang = tgt_vocab.lang_token(&pair.tgt.lang)?;

        src_tokens[[r, 0]] = src_lang;
        for (j, &u) in pair.src.units.iter().enumerate() {
            src_tokens[[r, j + 1]] = u;
        }
        src_tokens[[r, pair.src.units.len() + 1]] = src_vocab.eos();
        for j in 0..pair.src.units.len() + 2 {
            src_mask[[r, j]] = true;
        }

        tgt_input[[r, 0]] = tgt_lang;
        for (j, &u) in pair.tgt.units.iter().enumerate() {
            tgt_input[[r, j + 1]] = u;
            tgt_output[[r, j]] = u;
        }
        tgt_output[[r, pair.tgt.units.len()]] = tgt_vocab.eos();
        for j in 0..pair.tgt.units.len() + 1 {
            tgt_mask[[r, j]] = true;
        }

        utt_ids.push(pair.src.utt_id.clone());
    }

    Ok(Batch {
        src_tokens,
        src_mask,
        tgt_input,
        tgt_output,
        tgt_mask,
        utt_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::UnitSequence;

    fn vocab() -> Vocabulary {
        Vocabulary::new(32, &["A".into(), "B".into()])
    }

    fn pair(id: &str, src_units: Vec<u32>, tgt_units: Vec<u32>) -> ParallelPair {
        ParallelPair::new(
            UnitSequence::new(id, "A", src_units, true),
            UnitSequence::new(id, "B", tgt_units, true),
        )
        .unwrap()
    }

    #[test]
    fn budget_splits_three_pairs_into_two_batches() {
        // Length-10 rows cost 12 tokens each side; budget 24 fits two.
        let v = vocab();
        let pairs: Vec<ParallelPair> = (0..3)
            .map(|i| {
                pair(
                    &format!("u{i}"),
                    (0..10).map(|x| x as u32).collect(),
                    (0..10).map(|x| (x + 1) as u32).collect(),
                )
            })
            .collect();
        let batches = make_batches(&pairs, &v, &v, 24, 0, 64).unwrap();
        let mut sizes: Vec<usize> = batches.iter().map(|b| b.rows()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn oversized_pair_is_an_error_naming_the_utt() {
        let v = vocab();
        let pairs = vec![pair("big-one", (0..10).collect(), vec![1, 2])];
        match make_batches(&pairs, &v, &v, 8, 0, 64) {
            Err(Error::BudgetExceeded { utt_id, budget, needed }) => {
                assert_eq!(utt_id, "big-one");
                assert_eq!(budget, 8);
                assert_eq!(needed, 12);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_gives_identical_stream() {
        let v = vocab();
        let pairs: Vec<ParallelPair> = (0..40)
            .map(|i| {
                pair(
                    &format!("u{i}"),
                    (0..(3 + i % 5)).map(|x| x as u32).collect(),
                    (0..(3 + (i + 2) % 5)).map(|x| x as u32).collect(),
                )
            })
            .collect();
        let a = make_batches(&pairs, &v, &v, 40, 9, 8).unwrap();
        let b = make_batches(&pairs, &v, &v, 40, 9, 8).unwrap();
        assert_eq!(a, b);
        let c = make_batches(&pairs, &v, &v, 40, 10, 8).unwrap();
        assert_ne!(a, c, "different seed should reorder");
    }

    #[test]
    fn epoch_covers_every_pair_once() {
        let v = vocab();
        let pairs: Vec<ParallelPair> = (0..25)
            .map(|i| pair(&format!("u{i}"), vec![1, 2, 3], vec![4, 5]))
            .collect();
        let batches = make_batches(&pairs, &v, &v, 16, 1, 4).unwrap();
        let mut ids: Vec<String> = batches.iter().flat_map(|b| b.utt_ids.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = (0..25).map(|i| format!("u{i}")).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn budgets_hold_on_both_sides() {
        let v = vocab();
        let pairs: Vec<ParallelPair> = (0..30)
            .map(|i| {
                pair(
                    &format!("u{i}"),
                    (0..(2 + i % 7)).map(|x| x as u32).collect(),
                    (0..(2 + (i * 3) % 7)).map(|x| x as u32).collect(),
                )
            })
            .collect();
        let budget = 20;
        for b in make_batches(&pairs, &v, &v, budget, 3, 8).unwrap() {
            let src: usize = b.src_mask.iter().filter(|&&m| m).count();
            let tgt_real: usize = b.tgt_mask.iter().filter(|&&m| m).count();
            assert!(src <= budget);
            // Budget counts units+2 per row; the target matrices are one
            // column narrower, so real positions + rows stays in budget.
            assert!(tgt_real + b.rows() <= budget);
        }
    }

    #[test]
    fn teacher_forcing_rows_are_shifted_copies() {
        let v = vocab();
        let pairs = vec![pair("u0", vec![1, 2, 3], vec![7, 8, 9, 10])];
        let b = &make_batches(&pairs, &v, &v, 32, 0, 4).unwrap()[0];
        for j in 1..5 {
            assert_eq!(b.tgt_input[[0, j]], b.tgt_output[[0, j - 1]]);
        }
        assert_eq!(b.tgt_output[[0, 4]], v.eos());
        assert_eq!(b.tgt_input[[0, 0]], v.lang_token("B").unwrap());
        assert_eq!(b.src_tokens[[0, 0]], v.lang_token("A").unwrap());
        assert_eq!(b.src_tokens[[0, 4]], v.eos());
    }
}
