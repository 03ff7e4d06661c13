//! K-means model initialization.
//!
//! Frames are partitioned into state clusters by seeded Lloyd's iteration
//! with k-means++ seeding, then each state's frames are sub-clustered into
//! mixtures. Means are sub-cluster centroids, variances the sub-cluster
//! diagonal variances (floored), weights proportional to sub-cluster sizes.
//! Initial and transition probabilities start uniform (fully ergodic).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{GmmParams, Hmm, MIN_VAR_FLOOR};

const MAX_ITERS: usize = 50;
const REL_SHIFT_STOP: f64 = 1e-4;
/// Variance floor as a fraction of the global per-dimension corpus variance.
const FLOOR_FRACTION: f64 = 1e-3;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// from the point farthest from its assigned centroid.
fn lloyd(frames: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = frames.len();
    let dim = frames[0].len();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(frames[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = frames.iter().map(|f| sq_dist(f, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(frames[pick].to_vec());
        for (i, f) in frames.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(f, centroids.last().unwrap()));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        for (i, f) in frames.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(f, centroid);
                if d < best {
                    best = d;
                    assign[i] = c;
                }
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, f) in frames.iter().enumerate() {
            counts[assign[i]] += 1;
            for (d, v) in f.iter().enumerate() {
                sums[assign[i]][d] += v;
            }
        }
        let mut max_rel_shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed from the farthest point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(frames[a], &centroids[assign[a]])
                            .partial_cmp(&sq_dist(frames[b], &centroids[assign[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = frames[far].to_vec();
                max_rel_shift = f64::INFINITY;
                continue;
            }
            let mut shift = 0.0;
            let mut norm = 0.0;
            for d in 0..dim {
                let new = sums[c][d] / counts[c] as f64;
                shift += (new - centroids[c][d]).powi(2);
                norm += centroids[c][d] * centroids[c][d];
                centroids[c][d] = new;
            }
            max_rel_shift = max_rel_shift.max((shift.sqrt()) / (norm.sqrt() + 1e-12));
        }
        if max_rel_shift < REL_SHIFT_STOP {
            break;
        }
    }

    // Final assignment against the settled centroids.
    for (i, f) in frames.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(f, centroid);
            if d < best {
                best = d;
                assign[i] = c;
            }
        }
    }
    (centroids, assign)
}

/// Builds a fully ergodic HMM from clustered corpus frames.
pub fn kmeans_init(
    corpus: &[FeatureSequence],
    num_states: usize,
    num_mixtures: usize,
    seed: u64,
) -> Result<Hmm> {
    if num_states == 0 || num_mixtures == 0 {
        return Err(Error::InvalidArgument(
            "state and mixture counts must be >= 1".into(),
        ));
    }
    let first = corpus
        .first()
        .ok_or_else(|| Error::InsufficientData("empty corpus".into()))?;
    let dim = first.dim();
    if corpus.iter().any(|u| u.dim() != dim) {
        return Err(Error::InvalidArgument("mixed feature dimensions in corpus".into()));
    }
    let frames: Vec<&[f64]> = corpus
        .iter()
        .flat_map(|u| (0..u.len()).map(move |t| u.frame(t)))
        .collect();
    if frames.len() < num_states * num_mixtures {
        return Err(Error::InsufficientData(format!(
            "{} frames < {} clusters",
            frames.len(),
            num_states * num_mixtures
        )));
    }

    // Global per-dimension variance sets the floor.
    let n = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in &frames {
        for (d, v) in f.iter().enumerate() {
            mean[d] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in &frames {
        for (d, v) in f.iter().enumerate() {
            var[d] += (v - mean[d]) * (v - mean[d]);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let var_floor: Vec<f64> = var
        .iter()
        .map(|&v| (FLOOR_FRACTION * v).max(MIN_VAR_FLOOR))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, state_assign) = lloyd(&frames, num_states, &mut rng);

    let mut states = Vec::with_capacity(num_states);
    for j in 0..num_states {
        let mut members: Vec<&[f64]> = frames
            .iter()
            .zip(&state_assign)
            .filter(|(_, &a)| a == j)
            .map(|(f, _)| *f)
            .collect();
        // Degenerate state clusters are topped up from the whole corpus so
        // every mixture still gets data.
        while members.len() < num_mixtures {
            members.push(frames[rng.random_range(0..frames.len())]);
        }
        let (centroids, assign) = lloyd(&members, num_mixtures, &mut rng);

        let mut counts = vec![0usize; num_mixtures];
        let mut second = vec![0.0; num_mixtures * dim];
        for (i, f) in members.iter().enumerate() {
            let c = assign[i];
            counts[c] += 1;
            for d in 0..dim {
                let diff = f[d] - centroids[c][d];
                second[c * dim + d] += diff * diff;
            }
        }
        let mut weights = Vec::with_capacity(num_mixtures);
        let mut means = Vec::with_capacity(num_mixtures * dim);
        let mut vars = Vec::with_capacity(num_mixtures * dim);
        for c in 0..num_mixtures {
            weights.push(counts[c].max(1) as f64);
            means.extend_from_slice(&centroids[c]);
            for d in 0..dim {
                let v = if counts[c] > 0 {
                    second[c * dim + d] / counts[c] as f64
                } else {
                    var[d]
                };
                vars.push(v.max(var_floor[d]));
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        states.push(GmmParams {
            weights,
            means,
            vars,
        });
    }

    Hmm::new(
        dim,
        vec![1.0 / num_states as f64; num_states],
        vec![1.0 / num_states as f64; num_states * num_states],
        states,
        var_floor,
        *first.config(),
    )
}
