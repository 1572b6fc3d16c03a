//! Lloyd's algorithm with k-means++ seeding. Deterministic given
//! (inputs, seed); empty clusters are re-seeded with the point farthest
//! from its assigned centroid.

use ndarray::Array2;
use rand::Rng;

use super::{nearest_centroid, sq_dist, Codebook};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, streams};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitStats {
    pub iterations: usize,
    pub final_sse: f64,
}

/// Fits a K-cluster codebook over the given D-vectors.
///
/// Stops when the relative SSE improvement drops below `tol` or after
/// `max_iters` Lloyd iterations. SSE is non-increasing across iterations;
/// this is checked with a debug assertion on every step.
pub fn fit_codebook(
    points: &Array2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Codebook> {
    let n = points.nrows();
    let d = points.ncols();
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be >= 2, got {k}")));
    }
    if !points.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "k-means input points".into(),
        });
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(Error::InsufficientDistinctPoints {
            needed: k,
            found: distinct,
        });
    }

    let mut rng = derive_rng(seed, streams::CODEBOOK);
    let mut centroids = plus_plus_init(points, k, &mut rng);

    let mut assignments = vec![0usize; n];
    let mut prev_sse = f64::INFINITY;
    let mut sse = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..max_iters {
        iterations = iter + 1;

        // Assignment step.
        sse = 0.0;
        for (i, p) in points.rows().into_iter().enumerate() {
            let frame = p.as_slice().expect("contiguous row");
            let (j, dist) = nearest_with_dist(frame, &centroids);
            assignments[i] = j;
            sse += dist;
        }
        debug_assert!(
            sse <= prev_sse * (1.0 + 1e-12) + 1e-12,
            "Lloyd SSE increased: {prev_sse} -> {sse}"
        );

        if prev_sse.is_finite() && (prev_sse - sse) < tol * prev_sse.max(f64::MIN_POSITIVE) {
            break;
        }
        prev_sse = sse;

        // Update step.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let c = assignments[i];
            let mut row = sums.row_mut(c);
            row += &p;
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / counts[c] as f64);
            } else {
                // Re-seed an empty cluster with the point farthest from
                // its current centroid.
                let far = farthest_point(points, &centroids, &assignments);
                centroids.row_mut(c).assign(&points.row(far));
            }
        }
    }

    Codebook::new(
        centroids,
        seed,
        FitStats {
            iterations,
            final_sse: sse,
        },
    )
}

fn nearest_with_dist(frame: &[f64], centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let dist = sq_dist(frame, c.as_slice().expect("contiguous row"));
        if dist < best_d {
            best_d = dist;
            best = j;
        }
    }
    (best, best_d)
}

fn count_distinct(points: &Array2<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    rows.dedup();
    rows.len()
}

/// k-means++: first centroid uniform, the rest sampled proportionally to
/// squared distance from the nearest chosen centroid.
fn plus_plus_init(points: &Array2<f64>, k: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::<f64>::zeros((k, d));

    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));

    let mut min_d: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| {
            sq_dist(
                p.as_slice().expect("contiguous row"),
                centroids.row(0).as_slice().expect("contiguous row"),
            )
        })
        .collect();

    for c in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let threshold = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in min_d.iter().enumerate() {
                acc += w;
                if acc >= threshold {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass is on already-chosen points; fall back to
            // any point not yet used as a centroid.
            (0..n)
                .find(|&i| (0..c).all(|j| points.row(i) != centroids.row(j)))
                .unwrap_or(0)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            let dist = sq_dist(
                p.as_slice().expect("contiguous row"),
                centroids.row(c).as_slice().expect("contiguous row"),
            );
            if dist < min_d[i] {
                min_d[i] = dist;
            }
        }
    }
    centroids
}

fn farthest_point(points: &Array2<f64>, centroids: &Array2<f64>, assignments: &[usize]) -> usize {
    let mut best = 0usize;
    let mut best_d = -1.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let dist = sq_dist(
            p.as_slice().expect("contiguous row"),
            centroids.row(assignments[i]).as_slice().expect("contiguous row"),
        );
        if dist > best_d {
            best_d = dist;
            best = i;
        }
    }
    best
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn sse_of(points: &Array2<f64>, centroids: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .map(|p| nearest_with_dist(p.as_slice().expect("contiguous row"), centroids).1)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_well_separated_clusters() {
        // Brute-force optimal 2-partition of these 4 points puts the pairs
        // together; centroids are the pair means.
        let pts = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let cb = fit_codebook(&pts, 2, 42, 50, 1e-9).unwrap();
        let mut rows: Vec<Vec<f64>> = cb
            .centroids()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
    }

    #[test]
    fn identical_points_rejected() {
        let pts = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            fit_codebook(&pts, 2, 0, 10, 1e-6),
            Err(Error::InsufficientDistinctPoints { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let pts = array![[1.0, f64::INFINITY], [0.0, 0.0]];
        assert!(matches!(
            fit_codebook(&pts, 2, 0, 10, 1e-6),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = array![
            [0.1, 0.2],
            [0.3, 0.1],
            [5.0, 5.0],
            [5.1, 4.9],
            [-3.0, 2.0],
            [-3.1, 2.2]
        ];
        let a = fit_codebook(&pts, 3, 7, 100, 1e-12).unwrap();
        let b = fit_codebook(&pts, 3, 7, 100, 1e-12).unwrap();
        assert_eq!(a.centroids(), b.centroids());
        assert_eq!(a.fit_stats(), b.fit_stats());
    }

    #[test]
    fn sse_decreases_over_manual_iterations() {
        let pts = array![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [9.0, 9.0],
            [10.0, 9.0],
            [9.0, 10.0]
        ];
        // One iteration vs. many: final SSE cannot be larger.
        let one = fit_codebook(&pts, 2, 3, 1, 0.0).unwrap();
        let many = fit_codebook(&pts, 2, 3, 50, 0.0).unwrap();
        assert!(many.fit_stats().final_sse <= one.fit_stats().final_sse + 1e-12);
    }
}
