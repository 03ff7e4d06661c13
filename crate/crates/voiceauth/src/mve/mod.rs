//! Minimum-verification-error training of the (target, anti-target) pair.
//!
//! Window tokens from the enrollment data (class `Target`) and a cohort of
//! the most confusable impostor windows (class `Impostor`) drive a
//! generalized probabilistic descent on a smooth surrogate of the total
//! window verification error count.

mod cohort;
mod gpd;
mod loss;
pub mod pair_io;

pub use cohort::cohort_select;
pub use gpd::{gpd_train, gradient_check, TraceRow};
pub use loss::{loss_from_scores, misverification, mve_loss, sigmoid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{sliding_viterbi, Hmm, TrellisMode, WindowSpec};

/// Which side of the verification decision a token trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenClass {
    /// Enrollment speech of the registered speaker (set D0).
    Target,
    /// Impostor speech (set D1).
    Impostor,
}

/// One window-duration training token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowToken {
    /// Index of the source utterance in the accompanying corpus slice.
    pub utterance: usize,
    /// First frame of the window.
    pub start: usize,
    /// Frames per window.
    pub n_w: usize,
    pub class: TokenClass,
}

impl WindowToken {
    pub fn validate(&self, corpus: &[FeatureSequence]) -> Result<()> {
        let utt = corpus.get(self.utterance).ok_or_else(|| {
            Error::InvalidArgument(format!("token references utterance {}", self.utterance))
        })?;
        if self.start + self.n_w > utt.len() {
            return Err(Error::Range(format!(
                "token window [{}, {}) exceeds utterance {} ({} frames)",
                self.start,
                self.start + self.n_w,
                self.utterance,
                utt.len()
            )));
        }
        Ok(())
    }
}

/// Enumerates every window on the stride grid of each utterance as a token.
pub fn tokens_from_corpus(
    corpus: &[FeatureSequence],
    spec: &WindowSpec,
    class: TokenClass,
) -> Vec<WindowToken> {
    corpus
        .iter()
        .enumerate()
        .flat_map(|(u, utt)| {
            spec.starts(utt.len()).map(move |start| WindowToken {
                utterance: u,
                start,
                n_w: spec.n_w,
                class,
            })
        })
        .collect()
}

/// MVE / GPD hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MveConfig {
    /// Loss weight for miss detections (A0).
    pub loss_weight_target: f64,
    /// Loss weight for false alarms (A1).
    pub loss_weight_impostor: f64,
    /// Sigmoid slope applied to the misverification measure.
    pub sigmoid_slope: f64,
    /// Initial GPD step size.
    pub initial_step: f64,
    /// Number of passes over the shuffled token set.
    pub epochs: usize,
    /// Tokens per parameter update (1 = pure online GPD).
    pub batch_size: usize,
    /// Keep initial and transition probabilities fixed during descent.
    pub freeze_transitions: bool,
    /// Descend on means in sigma-scaled coordinates (updates preconditioned
    /// by the variance), which keeps the step size dimensionless.
    pub transform_means: bool,
}

impl Default for MveConfig {
    fn default() -> Self {
        Self {
            loss_weight_target: 1.0,
            loss_weight_impostor: 1.0,
            sigmoid_slope: 1.0,
            initial_step: 0.01,
            epochs: 10,
            batch_size: 1,
            freeze_transitions: true,
            transform_means: true,
        }
    }
}

impl MveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_weight_target > 0.0 && self.loss_weight_impostor > 0.0) {
            return Err(Error::InvalidArgument("loss weights must be > 0".into()));
        }
        if !(self.sigmoid_slope > 0.0) {
            return Err(Error::InvalidArgument("sigmoid slope must be > 0".into()));
        }
        if self.initial_step < 0.0 {
            return Err(Error::InvalidArgument("step size must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// The registered identity artifact: target and anti-target models plus
/// the operating decision threshold.
#[derive(Debug, Clone)]
pub struct SpeakerModelPair {
    pub target: Hmm,
    pub anti_target: Hmm,
    pub threshold: f64,
}

impl SpeakerModelPair {
    pub fn new(target: Hmm, anti_target: Hmm, threshold: f64) -> Result<Self> {
        if target.dim() != anti_target.dim() {
            return Err(Error::InvalidArgument(format!(
                "target dim {} != anti-target dim {}",
                target.dim(),
                anti_target.dim()
            )));
        }
        target.validate()?;
        anti_target.validate()?;
        Ok(Self {
            target,
            anti_target,
            threshold,
        })
    }
}

/// Normalized Viterbi scores of both models at every stride-grid window
/// start of one utterance, indexed by start frame.
pub(crate) fn utterance_llr_scores(
    pair: &SpeakerModelPair,
    utt: &FeatureSequence,
    n_w: usize,
) -> Result<Vec<(usize, f64, f64)>> {
    let spec = WindowSpec::new(n_w, 1)?;
    let g0 = sliding_viterbi(&pair.target, utt, &spec, TrellisMode::Growing)?;
    let g1 = sliding_viterbi(&pair.anti_target, utt, &spec, TrellisMode::Growing)?;
    Ok(g0
        .scores
        .iter()
        .zip(&g1.scores)
        .map(|(a, b)| (a.start, a.score, b.score))
        .collect())
}

/// Scores the given tokens against both models of the pair. The growing
/// trellis is shared per utterance; scores are read off at token starts.
pub fn score_tokens(
    pair: &SpeakerModelPair,
    corpus: &[FeatureSequence],
    tokens: &[WindowToken],
) -> Result<Vec<(f64, f64)>> {
    for token in tokens {
        token.validate(corpus)?;
    }
    let mut needed: Vec<(usize, usize)> = tokens.iter().map(|t| (t.utterance, t.n_w)).collect();
    needed.sort_unstable();
    needed.dedup();

    use std::collections::BTreeMap;
    let mut cache: BTreeMap<(usize, usize), BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for (u, n_w) in needed {
        let scores = utterance_llr_scores(pair, &corpus[u], n_w)?;
        cache.insert(
            (u, n_w),
            scores.into_iter().map(|(s, g0, g1)| (s, (g0, g1))).collect(),
        );
    }
    tokens
        .iter()
        .map(|t| {
            cache[&(t.utterance, t.n_w)]
                .get(&t.start)
                .copied()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "token start {} not on the stride grid of utterance {}",
                        t.start, t.utterance
                    ))
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrameConfig;
    use crate::hmm::GmmParams;

    pub(crate) fn gaussian_model(mean: f64, var: f64, dim: usize) -> Hmm {
        Hmm::new(
            dim,
            vec![1.0],
            vec![1.0],
            vec![GmmParams {
                weights: vec![1.0],
                means: vec![mean; dim],
                vars: vec![var; dim],
            }],
            vec![1e-8; dim],
            FrameConfig::default(),
        )
        .unwrap()
    }

    pub(crate) fn const_seq(value: f64, frames: usize, dim: usize) -> FeatureSequence {
        FeatureSequence::new(
            dim,
            vec![value; frames * dim],
            vec![1.0; frames],
            FrameConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn token_enumeration_covers_the_grid() {
        let corpus = vec![const_seq(0.0, 10, 1), const_seq(0.0, 7, 1)];
        let spec = WindowSpec::new(4, 2).unwrap();
        let tokens = tokens_from_corpus(&corpus, &spec, TokenClass::Target);
        // Utterance 0: starts 0,2,4,6; utterance 1: starts 0,2.
        assert_eq!(tokens.len(), 6);
        assert!(tokens.iter().all(|t| t.n_w == 4));
    }

    #[test]
    fn score_tokens_matches_direct_scoring() {
        let pair = SpeakerModelPair::new(
            gaussian_model(0.0, 1.0, 1),
            gaussian_model(1.0, 1.0, 1),
            0.0,
        )
        .unwrap();
        let corpus = vec![const_seq(0.25, 12, 1)];
        let tokens = vec![
            WindowToken {
                utterance: 0,
                start: 3,
                n_w: 5,
                class: TokenClass::Target,
            },
            WindowToken {
                utterance: 0,
                start: 0,
                n_w: 5,
                class: TokenClass::Impostor,
            },
        ];
        let scores = score_tokens(&pair, &corpus, &tokens).unwrap();
        // Single-state models: score is the mean per-frame log density, and
        // frames are constant, so it equals the density at 0.25.
        let g0 = pair.target.log_state_density(0, &[0.25]);
        let g1 = pair.anti_target.log_state_density(0, &[0.25]);
        for (a, b) in &scores {
            assert!((a - g0).abs() < 1e-12);
            assert!((b - g1).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_token_is_rejected() {
        let pair = SpeakerModelPair::new(
            gaussian_model(0.0, 1.0, 1),
            gaussian_model(1.0, 1.0, 1),
            0.0,
        )
        .unwrap();
        let corpus = vec![const_seq(0.0, 6, 1)];
        let tokens = vec![WindowToken {
            utterance: 0,
            start: 4,
            n_w: 5,
            class: TokenClass::Target,
        }];
        assert!(score_tokens(&pair, &corpus, &tokens).is_err());
    }
}
