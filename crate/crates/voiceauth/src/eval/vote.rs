//! Utterance-level majority vote over window decisions.

use crate::error::{Error, Result};
use crate::stream::{Decision, ScoreStream};

/// Outcome of a majority vote over non-abstained window decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome {
    /// True when accepts form a strict majority ("true speaker").
    pub accepted: bool,
    pub accept_count: usize,
    pub decision_count: usize,
}

/// Labels the utterance "true speaker" iff accepts exceed half of the
/// non-abstained decisions. Ties go to impostor.
pub fn utterance_vote(stream: &ScoreStream) -> Result<VoteOutcome> {
    if stream.is_empty() {
        return Err(Error::NoDecision("empty score stream".into()));
    }
    let mut accepts = 0usize;
    let mut decided = 0usize;
    for e in stream.entries() {
        match e.decision {
            Decision::Accept => {
                accepts += 1;
                decided += 1;
            }
            Decision::Reject => decided += 1,
            Decision::Abstain => {}
        }
    }
    if decided == 0 {
        return Err(Error::NoDecision("every window abstained".into()));
    }
    Ok(VoteOutcome {
        accepted: 2 * accepts > decided,
        accept_count: accepts,
        decision_count: decided,
    })
}
