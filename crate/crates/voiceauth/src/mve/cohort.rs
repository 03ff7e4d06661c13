//! Cohort selection: the most confusable impostor windows.

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::mve::{score_tokens, SpeakerModelPair, WindowToken};

/// Ranks impostor tokens by LLR against the pair (target minus anti-target,
/// both frame-normalized Viterbi scores) and returns the top `r`.
///
/// `r` conventionally equals the target-token count, which balances the two
/// classes for MVE training. Ties break on (utterance, start) so selection
/// is deterministic.
pub fn cohort_select(
    pair: &SpeakerModelPair,
    corpus: &[FeatureSequence],
    impostor_windows: &[WindowToken],
    r: usize,
) -> Result<Vec<WindowToken>> {
    if r > impostor_windows.len() {
        return Err(Error::InvalidArgument(format!(
            "cohort size {r} exceeds {} impostor windows",
            impostor_windows.len()
        )));
    }
    let scores = score_tokens(pair, corpus, impostor_windows)?;
    let mut ranked: Vec<(f64, WindowToken)> = impostor_windows
        .iter()
        .zip(&scores)
        .map(|(t, &(g0, g1))| (g0 - g1, *t))
        .collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.utterance.cmp(&b.1.utterance))
            .then_with(|| a.1.start.cmp(&b.1.start))
    });
    Ok(ranked.into_iter().take(r).map(|(_, t)| t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{FeatureSequence, FrameConfig};
    use crate::hmm::WindowSpec;
    use crate::mve::tests::{const_seq, gaussian_model};
    use crate::mve::{tokens_from_corpus, TokenClass};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn test_pair() -> SpeakerModelPair {
        SpeakerModelPair::new(
            gaussian_model(2.0, 1.0, 1),
            gaussian_model(0.0, 1.0, 1),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn picks_exactly_the_top_r_by_llr() {
        let pair = test_pair();
        // Constant utterances at distinct levels give distinct LLRs.
        let corpus: Vec<FeatureSequence> = [0.0, 0.5, 1.0, 1.5, 2.0, -1.0]
            .iter()
            .map(|&v| const_seq(v, 6, 1))
            .collect();
        let spec = WindowSpec::new(6, 1).unwrap();
        let tokens = tokens_from_corpus(&corpus, &spec, TokenClass::Impostor);
        assert_eq!(tokens.len(), 6);
        let picked = cohort_select(&pair, &corpus, &tokens, 3).unwrap();

        // Full-sort oracle.
        let scores = score_tokens(&pair, &corpus, &tokens).unwrap();
        let mut llr: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(i, &(g0, g1))| (g0 - g1, i))
            .collect();
        llr.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let expected: Vec<usize> = llr.iter().take(3).map(|&(_, i)| i).collect();
        // The closer a constant utterance is to the target mean (2.0), the
        // larger its LLR.
        for (picked_token, &idx) in picked.iter().zip(&expected) {
            assert_eq!(picked_token.utterance, tokens[idx].utterance);
        }
        let min_selected = llr[..3].iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let max_rest = llr[3..].iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_selected >= max_rest);
    }

    #[test]
    fn full_r_is_the_identity() {
        let pair = test_pair();
        let corpus = vec![const_seq(0.3, 10, 1)];
        let spec = WindowSpec::new(4, 1).unwrap();
        let tokens = tokens_from_corpus(&corpus, &spec, TokenClass::Impostor);
        let picked = cohort_select(&pair, &corpus, &tokens, tokens.len()).unwrap();
        assert_eq!(picked.len(), tokens.len());
        let mut a: Vec<(usize, usize)> = picked.iter().map(|t| (t.utterance, t.start)).collect();
        let mut b: Vec<(usize, usize)> = tokens.iter().map(|t| (t.utterance, t.start)).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_r_is_an_argument_error() {
        let pair = test_pair();
        let corpus = vec![const_seq(0.0, 5, 1)];
        let spec = WindowSpec::new(5, 1).unwrap();
        let tokens = tokens_from_corpus(&corpus, &spec, TokenClass::Impostor);
        assert!(matches!(
            cohort_select(&pair, &corpus, &tokens, tokens.len() + 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn confusable_impostor_dominates_the_cohort() {
        // Impostor B's features are sampled from the target model itself;
        // impostor A sits far away. The cohort should be mostly B.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pair = test_pair();
        let far: Vec<f64> = (0..200)
            .map(|_| -6.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let confusable: Vec<f64> = (0..200)
            .map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let corpus = vec![
            FeatureSequence::new(1, far, vec![1.0; 200], FrameConfig::default()).unwrap(),
            FeatureSequence::new(1, confusable, vec![1.0; 200], FrameConfig::default()).unwrap(),
        ];
        let spec = WindowSpec::new(20, 1).unwrap();
        let tokens = tokens_from_corpus(&corpus, &spec, TokenClass::Impostor);
        let half = tokens.len() / 2;
        let picked = cohort_select(&pair, &corpus, &tokens, half).unwrap();
        let from_b = picked.iter().filter(|t| t.utterance == 1).count();
        assert!(
            from_b as f64 > 0.9 * picked.len() as f64,
            "only {from_b}/{} cohort tokens from the confusable impostor",
            picked.len()
        );
    }
}
