//! MAP adaptation of the speaker-independent model to enrollment data.
//!
//! Occupancies come from the same short-time window scheme used in
//! training, so the adapted model keeps characterizing window-duration
//! statistics. Each parameter class blends data statistics with the prior
//! via `alpha = n / (n + eta)`; initial and transition probabilities are
//! copied from the prior unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{short_time_gamma, GmmParams, Hmm, WindowSpec};

/// Prior weights for the MAP update, one per parameter class
/// (weights, means, variances).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MapConfig {
    pub eta_weight: f64,
    pub eta_mean: f64,
    pub eta_var: f64,
    pub iterations: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            eta_weight: 16.0,
            eta_mean: 16.0,
            eta_var: 16.0,
            iterations: 3,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_weight > 0.0 && self.eta_mean > 0.0 && self.eta_var > 0.0) {
            return Err(Error::InvalidArgument("every eta must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("map iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// MAP-adapts the prior model to the enrollment utterances.
///
/// Per iteration, mixture occupancies `n_jk` and the 1st/2nd data moments
/// are accumulated under the current model with window-averaged posteriors
/// (each frame carries total weight one), then every mixture is updated by
/// the convex prior/data combination. Mixtures that receive no data keep
/// the prior's parameters exactly.
pub fn map_adapt(
    prior: &Hmm,
    enrollment: &[FeatureSequence],
    spec: &WindowSpec,
    cfg: &MapConfig,
) -> Result<Hmm> {
    cfg.validate()?;
    spec.validate()?;
    if enrollment.is_empty() {
        return Err(Error::InsufficientData("no enrollment utterances".into()));
    }
    for (i, utt) in enrollment.iter().enumerate() {
        if utt.len() < spec.n_w {
            return Err(Error::InsufficientData(format!(
                "enrollment utterance {i} has {} frames, window needs {}",
                utt.len(),
                spec.n_w
            )));
        }
    }

    let j_max = prior.num_states();
    let k_max = prior.num_mixtures();
    let dim = prior.dim();
    let floor = prior.var_floor().to_vec();

    let mut current = prior.clone();
    for _ in 0..cfg.iterations {
        // Frame-weight accumulation: mean posteriors over containing
        // windows, so each frame contributes total weight 1 and n_jk stays
        // commensurate with frame counts.
        let mut n = vec![0.0; j_max * k_max];
        let mut first = vec![0.0; j_max * k_max * dim];
        let mut second = vec![0.0; j_max * k_max * dim];
        for utt in enrollment {
            let stats = short_time_gamma(&current, utt, spec)?;
            for t in 0..utt.len() {
                let x = utt.frame(t);
                for j in 0..j_max {
                    for k in 0..k_max {
                        let w = stats.mix_posterior(t, j, k);
                        if w == 0.0 {
                            continue;
                        }
                        let jk = j * k_max + k;
                        n[jk] += w;
                        for d in 0..dim {
                            first[jk * dim + d] += w * x[d];
                            second[jk * dim + d] += w * x[d] * x[d];
                        }
                    }
                }
            }
        }
        if n.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite MAP occupancy".into()));
        }

        let mut states = Vec::with_capacity(j_max);
        for j in 0..j_max {
            let prior_params = prior.state_params(j);
            let state_total: f64 = (0..k_max).map(|k| n[j * k_max + k]).sum();
            let mut weights = vec![0.0; k_max];
            let mut means = prior_params.means.clone();
            let mut vars = prior_params.vars.clone();
            for k in 0..k_max {
                let jk = j * k_max + k;
                let n_jk = n[jk];
                let alpha_w = n_jk / (n_jk + cfg.eta_weight);
                let alpha_m = n_jk / (n_jk + cfg.eta_mean);
                let alpha_v = n_jk / (n_jk + cfg.eta_var);

                // Weight: blend the data fraction with the prior weight.
                let data_frac = if state_total > 0.0 {
                    n_jk / state_total
                } else {
                    0.0
                };
                weights[k] = alpha_w * data_frac + (1.0 - alpha_w) * prior_params.weights[k];

                if n_jk > 0.0 {
                    for d in 0..dim {
                        let idx = k * dim + d;
                        let e_x = first[jk * dim + d] / n_jk;
                        let e_xx = second[jk * dim + d] / n_jk;
                        let prior_mean = prior_params.means[idx];
                        let prior_var = prior_params.vars[idx];
                        let new_mean = alpha_m * e_x + (1.0 - alpha_m) * prior_mean;
                        let new_var = alpha_v * e_xx
                            + (1.0 - alpha_v) * (prior_var + prior_mean * prior_mean)
                            - new_mean * new_mean;
                        means[idx] = new_mean;
                        vars[idx] = new_var.max(floor[d]);
                    }
                }
                if !means.iter().all(|v| v.is_finite()) || !vars.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "non-finite MAP moment in state {j} mixture {k}"
                    )));
                }
            }
            let wsum: f64 = weights.iter().sum();
            if wsum > 0.0 {
                weights.iter_mut().for_each(|w| *w /= wsum);
            } else {
                weights = prior_params.weights.clone();
            }
            states.push(GmmParams {
                weights,
                means,
                vars,
            });
        }

        current = Hmm::new(
            dim,
            prior.pi().to_vec(),
            prior.transitions().to_vec(),
            states,
            floor.clone(),
            *prior.frame_config(),
        )?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrameConfig;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn single_gaussian_prior(mean: f64, var: f64) -> Hmm {
        Hmm::new(
            1,
            vec![1.0],
            vec![1.0],
            vec![GmmParams {
                weights: vec![1.0],
                means: vec![mean],
                vars: vec![var],
            }],
            vec![1e-8],
            FrameConfig::default(),
        )
        .unwrap()
    }

    fn seq(data: Vec<f64>) -> FeatureSequence {
        let frames = data.len();
        FeatureSequence::new(1, data, vec![1.0; frames], FrameConfig::default()).unwrap()
    }

    #[test]
    fn infinite_eta_keeps_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prior = single_gaussian_prior(0.0, 1.0);
        let data: Vec<f64> = (0..200)
            .map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cfg = MapConfig {
            eta_weight: 1e12,
            eta_mean: 1e12,
            eta_var: 1e12,
            iterations: 3,
        };
        let spec = WindowSpec::new(10, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &cfg).unwrap();
        let p = adapted.state_params(0);
        assert!((p.means[0] - 0.0).abs() < 1e-6);
        assert!((p.vars[0] - 1.0).abs() < 1e-6);
        assert!((p.weights[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_eta_gives_ml_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prior = single_gaussian_prior(0.0, 1.0);
        let data: Vec<f64> = (0..400)
            .map(|_| 2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = data.len() as f64;
        let mean: f64 = data.iter().sum::<f64>() / n;
        let second: f64 = data.iter().map(|x| x * x).sum::<f64>() / n;
        let cfg = MapConfig {
            eta_weight: 1e-12,
            eta_mean: 1e-12,
            eta_var: 1e-12,
            iterations: 1,
        };
        let spec = WindowSpec::new(20, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &cfg).unwrap();
        let p = adapted.state_params(0);
        assert!((p.means[0] - mean).abs() < 1e-6, "{} vs {mean}", p.means[0]);
        assert!(
            (p.vars[0] - (second - mean * mean)).abs() < 1e-6,
            "{} vs {}",
            p.vars[0],
            second - mean * mean
        );
    }

    #[test]
    fn hand_case_alpha_half() {
        // Prior mean 0, data mean 1, n = 16 frames, eta = 16 => mu = 0.5.
        let prior = single_gaussian_prior(0.0, 1.0);
        let data = vec![1.0; 16];
        let cfg = MapConfig {
            eta_weight: 16.0,
            eta_mean: 16.0,
            eta_var: 16.0,
            iterations: 1,
        };
        let spec = WindowSpec::new(4, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &cfg).unwrap();
        let p = adapted.state_params(0);
        assert!(
            (p.means[0] - 0.5).abs() < 1e-12,
            "alpha = 16/32 must give exactly 0.5, got {}",
            p.means[0]
        );
    }

    #[test]
    fn self_adaptation_is_stable() {
        // Enrollment drawn from the prior itself barely moves the model.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prior = single_gaussian_prior(1.5, 1.0);
        let data: Vec<f64> = (0..5000)
            .map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let spec = WindowSpec::new(50, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &MapConfig::default()).unwrap();
        let p = adapted.state_params(0);
        assert!(
            (p.means[0] - 1.5).abs() < 0.05,
            "self-adaptation moved the mean to {}",
            p.means[0]
        );
    }

    #[test]
    fn mean_update_is_convex_and_monotone_in_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prior = single_gaussian_prior(0.0, 1.0);
        let data: Vec<f64> = (0..100)
            .map(|_| 4.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data_mean: f64 = data.iter().sum::<f64>() / 100.0;
        let spec = WindowSpec::new(10, 1).unwrap();
        let mut previous = f64::INFINITY;
        for eta in [0.1, 1.0, 16.0, 100.0, 1000.0] {
            let cfg = MapConfig {
                eta_weight: eta,
                eta_mean: eta,
                eta_var: eta,
                iterations: 1,
            };
            let adapted = map_adapt(&prior, &[seq(data.clone())], &spec, &cfg).unwrap();
            let mu = adapted.state_params(0).means[0];
            // On the segment between prior mean (0) and data mean.
            assert!(mu >= 0.0 && mu <= data_mean);
            // Raising eta pulls strictly toward the prior.
            assert!(mu < previous, "eta={eta}: {mu} !< {previous}");
            previous = mu;
        }
    }

    #[test]
    fn unreached_mixture_keeps_prior_exactly() {
        // Mixture 2 sits so far away that its responsibilities underflow to
        // exactly zero, so its parameters must remain the prior's.
        let prior = Hmm::new(
            1,
            vec![1.0],
            vec![1.0],
            vec![GmmParams {
                weights: vec![0.5, 0.5],
                means: vec![0.0, 1.0e4],
                vars: vec![1.0, 1.0],
            }],
            vec![1e-8],
            FrameConfig::default(),
        )
        .unwrap();
        let data = vec![0.0; 64];
        let spec = WindowSpec::new(8, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &MapConfig::default()).unwrap();
        let p = adapted.state_params(0);
        assert_eq!(p.means[1], 1.0e4);
        assert_eq!(p.vars[1], 1.0);
    }

    #[test]
    fn weights_stay_on_the_simplex_and_pi_is_copied() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let prior = Hmm::new(
            1,
            vec![1.0],
            vec![1.0],
            vec![GmmParams {
                weights: vec![0.25, 0.75],
                means: vec![-1.0, 1.0],
                vars: vec![1.0, 1.0],
            }],
            vec![1e-8],
            FrameConfig::default(),
        )
        .unwrap();
        let data: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let spec = WindowSpec::new(10, 1).unwrap();
        let adapted = map_adapt(&prior, &[seq(data)], &spec, &MapConfig::default()).unwrap();
        adapted.validate().unwrap();
        assert_eq!(adapted.pi(), prior.pi());
        assert_eq!(adapted.transitions(), prior.transitions());
    }
}
