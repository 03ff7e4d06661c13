//! Real-time sequential testing.
//!
//! Slides the decision window over a feature stream, scoring every window
//! against the target / anti-target pair with one growing trellis per
//! model, and emits VAD-modulated accept/reject decisions: a window whose
//! anchor frame (the middle of the window) is silent abstains, though its
//! score is still recorded.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, FrameConfig, VadMask};
use crate::hmm::{sliding_viterbi, TrellisMode, WindowSpec};
use crate::mve::SpeakerModelPair;

/// Per-window outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
    Abstain,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
            Decision::Abstain => "abstain",
        }
    }
}

/// One emitted window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEntry {
    /// Middle frame of the window.
    pub anchor: usize,
    /// Normalized LLR score.
    pub llr: f64,
    pub vad_speech: bool,
    pub decision: Decision,
}

/// Per-window normalized LLR scores with VAD flags and decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStream {
    entries: Vec<StreamEntry>,
    frame_shift_s: f64,
}

impl ScoreStream {
    pub fn entries(&self) -> &[StreamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Accepted fraction over non-abstained windows, `None` if every
    /// window abstained.
    pub fn accept_fraction(&self) -> Option<f64> {
        let decided = self
            .entries
            .iter()
            .filter(|e| e.decision != Decision::Abstain)
            .count();
        if decided == 0 {
            return None;
        }
        let accepts = self
            .entries
            .iter()
            .filter(|e| e.decision == Decision::Accept)
            .count();
        Some(accepts as f64 / decided as f64)
    }

    /// Keeps every `every`-th entry; reporting can be coarser than the
    /// test resolution.
    pub fn decimated(&self, every: usize) -> ScoreStream {
        let every = every.max(1);
        ScoreStream {
            entries: self
                .entries
                .iter()
                .step_by(every)
                .copied()
                .collect(),
            frame_shift_s: self.frame_shift_s,
        }
    }

    /// Writes the stream as CSV: anchor_frame, time_s, llr, vad, decision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "anchor_frame,time_s,llr,vad,decision")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.anchor,
                e.anchor as f64 * self.frame_shift_s,
                e.llr,
                u8::from(e.vad_speech),
                e.decision.as_str()
            )?;
        }
        Ok(())
    }
}

/// Scores every window of the feature stream against the pair and renders
/// decisions: accept iff the normalized LLR reaches `threshold`, abstain
/// when the anchor frame is silent.
pub fn authenticate_stream(
    pair: &SpeakerModelPair,
    features: &FeatureSequence,
    mask: &VadMask,
    spec: &WindowSpec,
    threshold: f64,
) -> Result<ScoreStream> {
    spec.validate()?;
    if mask.len() != features.len() {
        return Err(Error::InvalidArgument(format!(
            "VAD mask length {} != frame count {}",
            mask.len(),
            features.len()
        )));
    }
    if features.len() < spec.n_w {
        return Err(Error::InsufficientData(format!(
            "stream has {} frames, window needs {}",
            features.len(),
            spec.n_w
        )));
    }
    let g0 = sliding_viterbi(&pair.target, features, spec, TrellisMode::Growing)?;
    let g1 = sliding_viterbi(&pair.anti_target, features, spec, TrellisMode::Growing)?;
    let entries = g0
        .scores
        .iter()
        .zip(&g1.scores)
        .map(|(a, b)| {
            let llr = a.score - b.score;
            let vad_speech = mask.is_speech(a.anchor);
            let decision = if !vad_speech {
                Decision::Abstain
            } else if llr >= threshold {
                Decision::Accept
            } else {
                Decision::Reject
            };
            StreamEntry {
                anchor: a.anchor,
                llr,
                vad_speech,
                decision,
            }
        })
        .collect();
    Ok(ScoreStream {
        entries,
        frame_shift_s: features.config().shift_s,
    })
}

/// Decision latency: the signal time one full window spans,
/// `(n_w - 1) * shift + frame_duration`.
pub fn stream_latency_report(spec: &WindowSpec, cfg: &FrameConfig) -> f64 {
    spec.signal_duration_s(cfg)
}
