//! Seeded K-fold splitting of a corpus, per speaker.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One cross-validation fold: utterance ids per role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub enroll: Vec<String>,
    pub test: Vec<String>,
}

/// Splits each speaker's utterances into K near-equal subsets (shuffled by
/// the seed); fold i tests on subset i and enrolls on the union of the
/// rest. Subset sizes differ by at most one, larger subsets first.
pub fn kfold_split(
    per_speaker: &BTreeMap<String, Vec<String>>,
    k: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument("K must be at least 2".into()));
    }
    for (speaker, utts) in per_speaker {
        if utts.len() < k {
            return Err(Error::InvalidArgument(format!(
                "speaker {speaker} has {} utterances, K-fold needs at least {k}",
                utts.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![
        Fold {
            enroll: Vec::new(),
            test: Vec::new(),
        };
        k
    ];
    // BTreeMap iteration keeps speaker order stable, so the rng stream is
    // reproducible.
    for utts in per_speaker.values() {
        let mut shuffled = utts.clone();
        shuffled.shuffle(&mut rng);
        let n = shuffled.len();
        let base = n / k;
        let extra = n % k;
        let mut offset = 0;
        let mut subsets: Vec<Vec<String>> = Vec::with_capacity(k);
        for i in 0..k {
            let size = base + usize::from(i < extra);
            subsets.push(shuffled[offset..offset + size].to_vec());
            offset += size;
        }
        for (i, fold) in folds.iter_mut().enumerate() {
            for (s, subset) in subsets.iter().enumerate() {
                if s == i {
                    fold.test.extend(subset.iter().cloned());
                } else {
                    fold.enroll.extend(subset.iter().cloned());
                }
            }
        }
    }
    Ok(folds)
}
