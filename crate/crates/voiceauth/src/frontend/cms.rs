//! Cepstral mean subtraction over windows.
//!
//! Only the static cepstra (the first [`NUM_CEPSTRA`] dimensions) are
//! normalized; delta and delta-delta dimensions pass through untouched.

use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, NUM_CEPSTRA};

/// Returns frames `[start, start + n_w)` with the window mean of the static
/// cepstra subtracted from each frame's statics.
pub fn window_cms(features: &FeatureSequence, start: usize, n_w: usize) -> Result<FeatureSequence> {
    if n_w == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if start + n_w > features.len() {
        return Err(Error::Range(format!(
            "window [{start}, {}) exceeds {} frames",
            start + n_w,
            features.len()
        )));
    }
    let mut block = features.slice(start, n_w)?;
    let statics = NUM_CEPSTRA.min(block.dim());
    let mut mean = vec![0.0; statics];
    for t in 0..n_w {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += block.frame(t)[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_w as f64);
    for t in 0..n_w {
        let frame = block.frame_mut(t);
        for (c, m) in mean.iter().enumerate() {
            frame[c] -= m;
        }
    }
    Ok(block)
}

/// Per-frame moving CMS: each frame's statics are normalized by the mean
/// over the `n_w`-frame window centered on it (clamped at sequence edges).
///
/// This is the streaming form used ahead of the growing-trellis scorer,
/// where per-frame emissions must be fixed: exact per-window CMS would give
/// the same frame different values in every window it belongs to.
pub fn sliding_cmn(features: &FeatureSequence, n_w: usize) -> Result<FeatureSequence> {
    if n_w == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    let t_max = features.len();
    let statics = NUM_CEPSTRA.min(features.dim());
    let half = n_w / 2;

    // Prefix sums per static dimension for O(T) window means.
    let mut prefix = vec![0.0; (t_max + 1) * statics];
    for t in 0..t_max {
        let frame = features.frame(t);
        for c in 0..statics {
            prefix[(t + 1) * statics + c] = prefix[t * statics + c] + frame[c];
        }
    }

    let mut out = features.clone();
    for t in 0..t_max {
        let lo = t.saturating_sub(half);
        let hi = (lo + n_w).min(t_max);
        let lo = hi.saturating_sub(n_w);
        let count = (hi - lo) as f64;
        let frame = out.frame_mut(t);
        for c in 0..statics {
            let mean = (prefix[hi * statics + c] - prefix[lo * statics + c]) / count;
            frame[c] -= mean;
        }
    }
    Ok(out)
}
