//! Misverification measures and the smooth MVE loss.

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::mve::{score_tokens, MveConfig, SpeakerModelPair, TokenClass, WindowToken};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Misverification measure of a scored token.
///
/// Target tokens: `d0 = -g(X|target) + g(X|anti)` (negative when correctly
/// accepted). Impostor tokens: `d1 = g(X|target) - g(X|anti)` (positive when
/// wrongly attracted to the target).
pub fn misverification(class: TokenClass, g_target: f64, g_anti: f64) -> f64 {
    match class {
        TokenClass::Target => -g_target + g_anti,
        TokenClass::Impostor => g_target - g_anti,
    }
}

/// Smooth loss over pre-scored tokens:
/// `L = sum A_c * sigmoid(slope * d)`.
pub fn loss_from_scores(
    scored: &[(TokenClass, f64, f64)],
    cfg: &MveConfig,
) -> f64 {
    scored
        .iter()
        .map(|&(class, g0, g1)| {
            let weight = match class {
                TokenClass::Target => cfg.loss_weight_target,
                TokenClass::Impostor => cfg.loss_weight_impostor,
            };
            weight * sigmoid(cfg.sigmoid_slope * misverification(class, g0, g1))
        })
        .sum()
}

/// Total MVE loss of the pair over target and cohort tokens, scoring every
/// token with the growing-trellis Viterbi.
pub fn mve_loss(
    pair: &SpeakerModelPair,
    corpus: &[FeatureSequence],
    targets: &[WindowToken],
    cohort: &[WindowToken],
    cfg: &MveConfig,
) -> Result<f64> {
    cfg.validate()?;
    if targets.is_empty() || cohort.is_empty() {
        return Err(Error::InvalidArgument(
            "both target and cohort token sets must be non-empty".into(),
        ));
    }
    let all: Vec<WindowToken> = targets.iter().chain(cohort).copied().collect();
    let scores = score_tokens(pair, corpus, &all)?;
    let scored: Vec<(TokenClass, f64, f64)> = all
        .iter()
        .zip(&scores)
        .map(|(t, &(g0, g1))| (t.class, g0, g1))
        .collect();
    Ok(loss_from_scores(&scored, cfg))
}

/// Fraction of target tokens currently missed and impostor tokens currently
/// accepted at the zero-LLR operating point.
pub(crate) fn empirical_error_rates(scored: &[(TokenClass, f64, f64)]) -> (f64, f64) {
    let mut miss = 0usize;
    let mut fa = 0usize;
    let mut n_target = 0usize;
    let mut n_impostor = 0usize;
    for &(class, g0, g1) in scored {
        match class {
            TokenClass::Target => {
                n_target += 1;
                if g0 - g1 < 0.0 {
                    miss += 1;
                }
            }
            TokenClass::Impostor => {
                n_impostor += 1;
                if g0 - g1 >= 0.0 {
                    fa += 1;
                }
            }
        }
    }
    (
        miss as f64 / n_target.max(1) as f64,
        fa as f64 / n_impostor.max(1) as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_scores_give_zero_measure() {
        assert_eq!(misverification(TokenClass::Target, -40.0, -40.0), 0.0);
        assert_eq!(misverification(TokenClass::Impostor, -40.0, -40.0), 0.0);
    }

    #[test]
    fn sign_conventions() {
        // Correctly accepted target: negative measure.
        assert_eq!(misverification(TokenClass::Target, -40.0, -42.0), -2.0);
        // Impostor attracted to the target: positive measure.
        assert_eq!(misverification(TokenClass::Impostor, -40.0, -42.0), 2.0);
    }

    #[test]
    fn all_ties_give_half_the_mass() {
        let cfg = MveConfig::default();
        let scored: Vec<(TokenClass, f64, f64)> = (0..6)
            .map(|i| {
                let class = if i < 4 {
                    TokenClass::Target
                } else {
                    TokenClass::Impostor
                };
                (class, -10.0, -10.0)
            })
            .collect();
        let loss = loss_from_scores(&scored, &cfg);
        assert!((loss - 6.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_drives_loss_to_zero() {
        let cfg = MveConfig::default();
        let scored = vec![
            (TokenClass::Target, -10.0, -500.0),
            (TokenClass::Impostor, -500.0, -10.0),
        ];
        let loss = loss_from_scores(&scored, &cfg);
        assert!(loss < 1e-100, "loss = {loss}");
    }

    #[test]
    fn single_target_token_logistic_value() {
        // d0 = 2 with unit weight and slope: L = 1 / (1 + e^-2).
        let cfg = MveConfig::default();
        let scored = vec![(TokenClass::Target, -42.0, -40.0)];
        let loss = loss_from_scores(&scored, &cfg);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((loss - expected).abs() < 1e-12);
        assert!((expected - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn loss_stays_inside_its_bounds() {
        let cfg = MveConfig {
            loss_weight_target: 2.0,
            loss_weight_impostor: 3.0,
            ..MveConfig::default()
        };
        let scored = vec![
            (TokenClass::Target, -40.0, -39.0),
            (TokenClass::Target, -40.0, -45.0),
            (TokenClass::Impostor, -41.0, -40.0),
        ];
        let loss = loss_from_scores(&scored, &cfg);
        assert!(loss > 0.0 && loss < 2.0 * 2.0 + 3.0);
    }

    #[test]
    fn corpus_level_loss_matches_manual_scoring() {
        use crate::frontend::FeatureSequence;
        use crate::hmm::WindowSpec;
        use crate::mve::tests::{const_seq, gaussian_model};
        use crate::mve::{score_tokens, tokens_from_corpus, SpeakerModelPair};

        let pair = SpeakerModelPair::new(
            gaussian_model(0.0, 1.0, 1),
            gaussian_model(1.0, 1.0, 1),
            0.0,
        )
        .unwrap();
        let corpus: Vec<FeatureSequence> = vec![const_seq(0.1, 10, 1), const_seq(0.9, 10, 1)];
        let spec = WindowSpec::new(5, 1).unwrap();
        let targets = tokens_from_corpus(&corpus[..1], &spec, TokenClass::Target);
        let cohort: Vec<crate::mve::WindowToken> =
            tokens_from_corpus(&corpus, &spec, TokenClass::Impostor)
                .into_iter()
                .filter(|t| t.utterance == 1)
                .collect();
        let cfg = MveConfig::default();
        let loss = mve_loss(&pair, &corpus, &targets, &cohort, &cfg).unwrap();

        let all: Vec<crate::mve::WindowToken> =
            targets.iter().chain(&cohort).copied().collect();
        let scores = score_tokens(&pair, &corpus, &all).unwrap();
        let manual: f64 = all
            .iter()
            .zip(&scores)
            .map(|(t, &(g0, g1))| sigmoid(misverification(t.class, g0, g1)))
            .sum();
        assert!((loss - manual).abs() < 1e-12);
        // Bounds from the invariant: 0 < L < |D0| A0 + |cohort| A1.
        assert!(loss > 0.0 && loss < (targets.len() + cohort.len()) as f64);
    }

    #[test]
    fn empirical_rates_count_errors() {
        let scored = vec![
            (TokenClass::Target, -40.0, -41.0), // accepted
            (TokenClass::Target, -42.0, -41.0), // missed
            (TokenClass::Impostor, -40.0, -41.0), // false alarm
            (TokenClass::Impostor, -44.0, -41.0), // rejected
        ];
        let (wmde, wfae) = empirical_error_rates(&scored);
        assert_eq!(wmde, 0.5);
        assert_eq!(wfae, 0.5);
    }
}
