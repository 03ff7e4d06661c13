//! Viterbi scoring: whole-segment alignment and the sliding-window scorer.
//!
//! The sliding scorer grows one trellis over the entire utterance and, for
//! each window end on the stride grid, traces the globally best path back
//! through the window (partial traceback), summing that path's emission and
//! transition terms over the window's frames. The trellis is reset only at
//! the start of the utterance, so the whole run costs a single forward
//! pass. An exact restart-per-window mode exists as the slow reference.

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{FrameDensities, Hmm, WindowSpec};

/// Whole-segment Viterbi outcome.
#[derive(Debug, Clone)]
pub struct ViterbiResult {
    /// Best-path joint log-probability divided by the frame count.
    pub norm_loglik: f64,
    /// Best state alignment.
    pub path: Vec<usize>,
}

/// Work counters proving the single-pass contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrellisCounters {
    /// Gaussian mixture component evaluations.
    pub emission_evals: u64,
    /// (i, j) transition maximizations.
    pub forward_steps: u64,
}

/// Sliding-window scoring strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrellisMode {
    /// One growing trellis per utterance, scores by partial traceback.
    Growing,
    /// Independent Viterbi per window; the exact but slow reference.
    RestartPerWindow,
}

/// One emitted window score, anchored at the window's middle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub start: usize,
    pub anchor: usize,
    pub score: f64,
}

/// Per-window normalized log-likelihood stream.
#[derive(Debug, Clone)]
pub struct SlidingScores {
    pub scores: Vec<WindowScore>,
    pub counters: TrellisCounters,
}

pub(crate) struct GrownTrellis {
    j_max: usize,
    delta: Vec<f64>,
    psi: Vec<u32>,
}

impl GrownTrellis {
    /// Single forward pass over `t_max` frames of cached densities.
    pub(crate) fn grow(
        model: &Hmm,
        dens: &FrameDensities,
        t_max: usize,
        counters: &mut TrellisCounters,
    ) -> Self {
        let j_max = model.num_states();
        let mut delta = vec![0.0; t_max * j_max];
        let mut psi = vec![0u32; t_max * j_max];
        for j in 0..j_max {
            delta[j] = model.log_pi[j] + dens.state(0, j);
        }
        for t in 1..t_max {
            for j in 0..j_max {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u32;
                for i in 0..j_max {
                    let cand = delta[(t - 1) * j_max + i] + model.log_trans[i * j_max + j];
                    if cand > best {
                        best = cand;
                        arg = i as u32;
                    }
                }
                delta[t * j_max + j] = best + dens.state(t, j);
                psi[t * j_max + j] = arg;
            }
            counters.forward_steps += (j_max * j_max) as u64;
        }
        Self { j_max, delta, psi }
    }

    fn best_state_at(&self, t: usize) -> usize {
        let row = &self.delta[t * self.j_max..(t + 1) * self.j_max];
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    /// State sequence of the globally best path ending at `end`, restricted
    /// to frames `[start, end]`.
    pub(crate) fn window_path(&self, start: usize, end: usize) -> Vec<usize> {
        let mut states = vec![0usize; end - start + 1];
        let mut j = self.best_state_at(end);
        for t in (start..=end).rev() {
            states[t - start] = j;
            if t > start {
                j = self.psi[t * self.j_max + j] as usize;
            }
        }
        states
    }

    /// Window-restricted cost of the globally best path ending at `end`:
    /// emission terms over `[start, end]` plus the transitions inside the
    /// window. The initial probability is not part of any window but the
    /// first one's entry emission.
    pub(crate) fn window_cost(
        &self,
        model: &Hmm,
        dens: &FrameDensities,
        start: usize,
        end: usize,
    ) -> f64 {
        let mut j = self.best_state_at(end);
        let mut sum = 0.0;
        for t in (start + 1..=end).rev() {
            let prev = self.psi[t * self.j_max + j] as usize;
            sum += dens.state(t, j) + model.log_trans[prev * self.j_max + j];
            j = prev;
        }
        sum + dens.state(start, j)
    }
}

/// Best-path joint log-probability via Viterbi, normalized by the frame
/// count. Also returns the alignment.
pub fn viterbi_loglik(model: &Hmm, segment: &FeatureSequence) -> Result<ViterbiResult> {
    if segment.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "segment dim {} != model dim {}",
            segment.dim(),
            model.dim()
        )));
    }
    let t_max = segment.len();
    let dens = model.densities(segment);
    let mut counters = TrellisCounters::default();
    let trellis = GrownTrellis::grow(model, &dens, t_max, &mut counters);
    let end_state = trellis.best_state_at(t_max - 1);
    let joint = trellis.delta[(t_max - 1) * trellis.j_max + end_state];
    Ok(ViterbiResult {
        norm_loglik: joint / t_max as f64,
        path: trellis.window_path(0, t_max - 1),
    })
}

/// Per-window normalized log-likelihood stream over the stride grid.
pub fn sliding_viterbi(
    model: &Hmm,
    utterance: &FeatureSequence,
    spec: &WindowSpec,
    mode: TrellisMode,
) -> Result<SlidingScores> {
    spec.validate()?;
    if utterance.dim() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "utterance dim {} != model dim {}",
            utterance.dim(),
            model.dim()
        )));
    }
    let t_max = utterance.len();
    if t_max < spec.n_w {
        return Err(Error::InsufficientData(format!(
            "utterance has {t_max} frames, window needs {}",
            spec.n_w
        )));
    }

    let mut counters = TrellisCounters::default();
    let mut scores = Vec::with_capacity(spec.count(t_max));
    match mode {
        TrellisMode::Growing => {
            let dens = model.densities(utterance);
            counters.emission_evals =
                (t_max * model.num_states() * model.num_mixtures()) as u64;
            let trellis = GrownTrellis::grow(model, &dens, t_max, &mut counters);
            for start in spec.starts(t_max) {
                let end = start + spec.n_w - 1;
                let cost = trellis.window_cost(model, &dens, start, end);
                scores.push(WindowScore {
                    start,
                    anchor: start + spec.n_w / 2,
                    score: cost / spec.n_w as f64,
                });
            }
        }
        TrellisMode::RestartPerWindow => {
            for start in spec.starts(t_max) {
                let window = utterance.slice(start, spec.n_w)?;
                counters.emission_evals +=
                    (spec.n_w * model.num_states() * model.num_mixtures()) as u64;
                counters.forward_steps +=
                    ((spec.n_w - 1) * model.num_states() * model.num_states()) as u64;
                let result = viterbi_loglik(model, &window)?;
                scores.push(WindowScore {
                    start,
                    anchor: start + spec.n_w / 2,
                    score: result.norm_loglik,
                });
            }
        }
    }
    Ok(SlidingScores { scores, counters })
}

/// Window scores and state alignments from one grown trellis, for the
/// given window starts. The score is the same partial-traceback cost that
/// [`sliding_viterbi`] emits in growing mode.
pub(crate) fn sliding_scores_and_paths(
    model: &Hmm,
    utterance: &FeatureSequence,
    n_w: usize,
    starts: &[usize],
) -> Result<Vec<(f64, Vec<usize>)>> {
    let t_max = utterance.len();
    if t_max < n_w {
        return Err(Error::InsufficientData(format!(
            "utterance has {t_max} frames, window needs {n_w}"
        )));
    }
    let dens = model.densities(utterance);
    let mut counters = TrellisCounters::default();
    let trellis = GrownTrellis::grow(model, &dens, t_max, &mut counters);
    starts
        .iter()
        .map(|&s| {
            if s + n_w > t_max {
                return Err(Error::Range(format!("window start {s} out of range")));
            }
            let end = s + n_w - 1;
            Ok((
                trellis.window_cost(model, &dens, s, end) / n_w as f64,
                trellis.window_path(s, end),
            ))
        })
        .collect()
}
