//! Log-domain forward-backward over a segment treated in isolation.

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{log_sum_exp, FrameDensities, Hmm, OccupancyStats};

/// Reusable buffers for window-sized forward-backward passes.
pub(crate) struct FbScratch {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    terms: Vec<f64>,
}

impl FbScratch {
    pub(crate) fn new() -> Self {
        Self {
            alpha: Vec::new(),
            beta: Vec::new(),
            terms: Vec::new(),
        }
    }

    /// Forward-backward on frames `[start, start + len)` of a cached
    /// utterance. State posteriors are added into `gamma_sum` (indexed by
    /// utterance frame), window counts into `frame_windows`, transition and
    /// initial posterior sums into `stats`. Returns the window log-likelihood.
    pub(crate) fn accumulate_window(
        &mut self,
        model: &Hmm,
        dens: &FrameDensities,
        start: usize,
        len: usize,
        gamma_sum: &mut [f64],
        frame_windows: &mut [f64],
        stats: &mut OccupancyStats,
    ) -> f64 {
        let j_max = model.num_states();
        self.alpha.resize(len * j_max, 0.0);
        self.beta.resize(len * j_max, 0.0);
        self.terms.resize(j_max, 0.0);

        // Forward.
        for j in 0..j_max {
            self.alpha[j] = model.log_pi[j] + dens.state(start, j);
        }
        for tau in 1..len {
            let t = start + tau;
            for j in 0..j_max {
                for (i, term) in self.terms.iter_mut().enumerate() {
                    *term = self.alpha[(tau - 1) * j_max + i] + model.log_trans[i * j_max + j];
                }
                self.alpha[tau * j_max + j] = log_sum_exp(&self.terms) + dens.state(t, j);
            }
        }
        let loglik = log_sum_exp(&self.alpha[(len - 1) * j_max..len * j_max]);

        // Backward.
        for j in 0..j_max {
            self.beta[(len - 1) * j_max + j] = 0.0;
        }
        for tau in (0..len - 1).rev() {
            let t_next = start + tau + 1;
            for i in 0..j_max {
                for (j, term) in self.terms.iter_mut().enumerate() {
                    *term = model.log_trans[i * j_max + j]
                        + dens.state(t_next, j)
                        + self.beta[(tau + 1) * j_max + j];
                }
                self.beta[tau * j_max + i] = log_sum_exp(&self.terms);
            }
        }

        // State posteriors and window-initial posteriors.
        for tau in 0..len {
            let t = start + tau;
            frame_windows[t] += 1.0;
            for j in 0..j_max {
                let g = (self.alpha[tau * j_max + j] + self.beta[tau * j_max + j] - loglik).exp();
                gamma_sum[t * j_max + j] += g;
                if tau == 0 {
                    stats.init[j] += g;
                }
            }
        }

        // Transition pair posteriors.
        for tau in 0..len - 1 {
            let t_next = start + tau + 1;
            for i in 0..j_max {
                let a = self.alpha[tau * j_max + i];
                for j in 0..j_max {
                    let xi = (a
                        + model.log_trans[i * j_max + j]
                        + dens.state(t_next, j)
                        + self.beta[(tau + 1) * j_max + j]
                        - loglik)
                        .exp();
                    stats.trans[i * j_max + j] += xi;
                }
            }
        }

        stats.windows += 1;
        stats.total_loglik += loglik;
        loglik
    }
}

/// Converts window-summed state posteriors into the final occupancy stats:
/// mean posteriors per frame plus mixture-level 0th/1st/2nd-order sums.
pub(crate) fn finalize_stats(
    model: &Hmm,
    features: &FeatureSequence,
    dens: &FrameDensities,
    gamma_sum: &[f64],
    frame_windows: &[f64],
    stats: &mut OccupancyStats,
) {
    let j_max = model.num_states();
    let k_max = model.num_mixtures();
    let dim = model.dim();
    for t in 0..features.len() {
        let count = frame_windows[t];
        if count == 0.0 {
            continue;
        }
        let x = features.frame(t);
        for j in 0..j_max {
            let g_sum = gamma_sum[t * j_max + j];
            stats.gamma[t * j_max + j] = g_sum / count;
            for m in 0..k_max {
                let resp = dens.responsibility(t, j, m);
                stats.mix_posterior[(t * j_max + j) * k_max + m] = g_sum / count * resp;
                let w_sum = g_sum * resp;
                if w_sum == 0.0 {
                    continue;
                }
                let jk = j * k_max + m;
                stats.zeroth[jk] += w_sum;
                let first = &mut stats.first[jk * dim..(jk + 1) * dim];
                let second = &mut stats.second[jk * dim..(jk + 1) * dim];
                for d in 0..dim {
                    first[d] += w_sum * x[d];
                    second[d] += w_sum * x[d] * x[d];
                }
            }
        }
    }
}

/// Standard log-domain forward-backward over the whole segment, initialized
/// with the model's initial probabilities. Returns the per-frame posteriors
/// (and segment-level sufficient statistics) plus `log p(segment | model)`.
pub fn forward_backward(model: &Hmm, segment: &FeatureSequence) -> Result<(OccupancyStats, f64)> {
    if segment.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "segment dim {} != model dim {}",
            segment.dim(),
            model.dim()
        )));
    }
    let t_max = segment.len();
    let j_max = model.num_states();
    let dens = model.densities(segment);
    let mut stats = OccupancyStats::zeros(j_max, model.num_mixtures(), model.dim(), t_max);
    let mut gamma_sum = vec![0.0; t_max * j_max];
    let mut frame_windows = vec![0.0; t_max];
    let mut scratch = FbScratch::new();
    let loglik = scratch.accumulate_window(
        model,
        &dens,
        0,
        t_max,
        &mut gamma_sum,
        &mut frame_windows,
        &mut stats,
    );
    finalize_stats(model, segment, &dens, &gamma_sum, &frame_windows, &mut stats);
    Ok((stats, loglik))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::frontend::{FeatureSequence, FrameConfig};
    use crate::hmm::{GmmParams, Hmm};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_model(rng: &mut ChaCha8Rng, j: usize, k: usize, dim: usize) -> Hmm {
        let simplex = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| v / sum).collect()
        };
        let pi = simplex(rng, j);
        let mut trans = Vec::with_capacity(j * j);
        for _ in 0..j {
            trans.extend(simplex(rng, j));
        }
        let states = (0..j)
            .map(|_| GmmParams {
                weights: simplex(rng, k),
                means: (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                vars: (0..k * dim).map(|_| rng.random_range(0.3..1.5)).collect(),
            })
            .collect();
        Hmm::new(dim, pi, trans, states, vec![1e-6; dim], FrameConfig::default()).unwrap()
    }

    pub(crate) fn random_features(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> FeatureSequence {
        let data = (0..t * dim).map(|_| rng.random_range(-2.5..2.5)).collect();
        FeatureSequence::new(dim, data, vec![1.0; t], FrameConfig::default()).unwrap()
    }

    /// Exhaustive path-sum oracle: enumerates all J^T state paths.
    pub(crate) fn enumerate_paths(
        model: &Hmm,
        segment: &FeatureSequence,
    ) -> (Vec<Vec<f64>>, f64, f64, Vec<usize>) {
        let t_max = segment.len();
        let j_max = model.num_states();
        let b: Vec<Vec<f64>> = (0..t_max)
            .map(|t| {
                (0..j_max)
                    .map(|j| model.log_state_density(j, segment.frame(t)))
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut per_state = vec![vec![0.0; j_max]; t_max];
        let mut best = f64::NEG_INFINITY;
        let mut best_path = vec![0; t_max];
        let paths = (j_max as u64).pow(t_max as u32);
        for code in 0..paths {
            let mut c = code;
            let path: Vec<usize> = (0..t_max)
                .map(|_| {
                    let s = (c % j_max as u64) as usize;
                    c /= j_max as u64;
                    s
                })
                .collect();
            let mut logp = model.log_pi[path[0]] + b[0][path[0]];
            for t in 1..t_max {
                logp += model.log_trans[path[t - 1] * j_max + path[t]] + b[t][path[t]];
            }
            let p = logp.exp();
            total += p;
            for (t, &s) in path.iter().enumerate() {
                per_state[t][s] += p;
            }
            if logp > best {
                best = logp;
                best_path = path;
            }
        }
        let gamma = per_state
            .iter()
            .map(|row| row.iter().map(|&p| p / total).collect())
            .collect();
        (gamma, total.ln(), best, best_path)
    }

    #[test]
    fn single_state_posterior_is_one_and_loglik_sums_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = random_model(&mut rng, 1, 3, 2);
        let feats = random_features(&mut rng, 12, 2);
        let (stats, loglik) = forward_backward(&model, &feats).unwrap();
        let direct: f64 = (0..12)
            .map(|t| model.log_state_density(0, feats.frame(t)))
            .sum();
        assert!((loglik - direct).abs() < 1e-10);
        for t in 0..12 {
            assert!((stats.gamma(t, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_state_three_frame_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let model = random_model(&mut rng, 2, 2, 2);
            let feats = random_features(&mut rng, 3, 2);
            let (stats, loglik) = forward_backward(&model, &feats).unwrap();
            let (gamma_ref, loglik_ref, _, _) = enumerate_paths(&model, &feats);
            assert!((loglik - loglik_ref).abs() < 1e-9, "loglik mismatch");
            for t in 0..3 {
                for j in 0..2 {
                    assert!(
                        (stats.gamma(t, j) - gamma_ref[t][j]).abs() < 1e-9,
                        "gamma({t},{j}): {} vs {}",
                        stats.gamma(t, j),
                        gamma_ref[t][j]
                    );
                }
            }
        }
    }

    #[test]
    fn symmetric_model_gives_uniform_posteriors() {
        // Uniform transitions and identical emissions in every state.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let j = 3;
        let k = 2;
        let dim = 2;
        let shared = GmmParams {
            weights: vec![0.5, 0.5],
            means: (0..k * dim).map(|i| i as f64 * 0.4 - 0.5).collect(),
            vars: vec![0.8; k * dim],
        };
        let model = Hmm::new(
            dim,
            vec![1.0 / 3.0; 3],
            vec![1.0 / 3.0; 9],
            vec![shared.clone(), shared.clone(), shared],
            vec![1e-6; dim],
            FrameConfig::default(),
        )
        .unwrap();
        let feats = random_features(&mut rng, 8, dim);
        let (stats, _) = forward_backward(&model, &feats).unwrap();
        for t in 0..8 {
            for s in 0..j {
                assert!((stats.gamma(t, s) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gamma_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = random_model(&mut rng, 3, 2, 2);
        let feats = random_features(&mut rng, 20, 2);
        let (stats, _) = forward_backward(&model, &feats).unwrap();
        for t in 0..20 {
            let sum: f64 = (0..3).map(|j| stats.gamma(t, j)).sum();
            assert!((sum - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mixture_posteriors_sum_to_state_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let model = random_model(&mut rng, 2, 3, 2);
        let feats = random_features(&mut rng, 10, 2);
        let (stats, _) = forward_backward(&model, &feats).unwrap();
        for t in 0..10 {
            for j in 0..2 {
                let sum: f64 = (0..3).map(|k| stats.mix_posterior(t, j, k)).sum();
                assert!((sum - stats.gamma(t, j)).abs() < 1e-10);
            }
        }
    }
}
