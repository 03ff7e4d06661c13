//! Frame-level energy VAD.
//!
//! Each frame's decision uses the average log mel energy of the
//! `neighborhood` frames centered on it (clamped at sequence edges); a
//! frame is speech when that average reaches the utterance's 10th-percentile
//! log mel energy plus a dB offset.

use crate::frontend::FeatureSequence;

/// Default neighborhood size in frames.
pub const VAD_NEIGHBORHOOD: usize = 80;
/// Default threshold offset above the 10th-percentile energy, in dB.
pub const VAD_OFFSET_DB: f64 = 6.0;

const LN10_OVER_10: f64 = 0.23025850929940458;

/// Per-frame speech flags, aligned 1:1 with a feature sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VadMask {
    flags: Vec<bool>,
}

impl VadMask {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    /// Marks every frame as speech (used for pre-cleaned feature input).
    pub fn all_speech(frames: usize) -> Self {
        Self {
            flags: vec![true; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_speech(&self, t: usize) -> bool {
        self.flags[t]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn speech_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Labels each frame speech/silence from smoothed log mel energy.
pub fn vad(features: &FeatureSequence, neighborhood: usize, threshold_offset_db: f64) -> VadMask {
    let energies = features.log_energy();
    let t_max = energies.len();
    let n = neighborhood.max(1);
    let half = n / 2;

    let mut sorted = energies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p10 = sorted[(t_max - 1) / 10];
    let threshold = p10 + threshold_offset_db * LN10_OVER_10;

    let mut prefix = vec![0.0; t_max + 1];
    for t in 0..t_max {
        prefix[t + 1] = prefix[t] + energies[t];
    }

    let flags = (0..t_max)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (lo + n).min(t_max);
            let lo = hi.saturating_sub(n);
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            mean >= threshold
        })
        .collect();
    VadMask { flags }
}
