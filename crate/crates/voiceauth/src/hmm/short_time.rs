//! Short-time sequential training.
//!
//! State occupancies are accumulated from every sliding window that
//! contains a frame, instead of from the whole utterance, so the trained
//! statistics match the short test windows used at runtime. With
//! `n_w = T` the scheme falls back to conventional utterance-based
//! training.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::forward::{finalize_stats, FbScratch};
use crate::hmm::{GmmParams, Hmm, OccupancyStats, WindowSpec};

/// Minimum total training frames per (state, mixture) pair.
const FRAMES_PER_COMPONENT: usize = 10;
/// Occupancy below this keeps the previous parameters.
const OCCUPANCY_EPS: f64 = 1e-12;

/// Window-averaged state occupancies for one utterance.
///
/// For every frame `t`, the state posterior is the uniform mean of
/// `P(s_t = j | window)` over all in-range windows on the stride grid that
/// contain `t`, each posterior computed by forward-backward on that window
/// in isolation. The accumulated sufficient statistics sum the same
/// posteriors over window tokens (no averaging), which is what the
/// re-estimation step consumes.
pub fn short_time_gamma(
    model: &Hmm,
    utterance: &FeatureSequence,
    spec: &WindowSpec,
) -> Result<OccupancyStats> {
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

    let j_max = model.num_states();
    let dens = model.densities(utterance);
    let mut stats = OccupancyStats::zeros(j_max, model.num_mixtures(), model.dim(), t_max);
    let mut gamma_sum = vec![0.0; t_max * j_max];
    let mut frame_windows = vec![0.0; t_max];
    let mut scratch = FbScratch::new();
    for start in spec.starts(t_max) {
        scratch.accumulate_window(
            model,
            &dens,
            start,
            spec.n_w,
            &mut gamma_sum,
            &mut frame_windows,
            &mut stats,
        );
    }
    finalize_stats(model, utterance, &dens, &gamma_sum, &frame_windows, &mut stats);
    Ok(stats)
}

/// One Baum-Welch M-step from accumulated window statistics. States or
/// mixtures with (near-)zero occupancy keep their previous parameters.
fn reestimate(model: &Hmm, agg: &OccupancyStats) -> Result<Hmm> {
    let j_max = model.num_states();
    let k_max = model.num_mixtures();
    let dim = model.dim();
    let floor = model.var_floor().to_vec();

    let pi_total: f64 = agg.init.iter().sum();
    let pi: Vec<f64> = if pi_total > OCCUPANCY_EPS {
        agg.init.iter().map(|v| v / pi_total).collect()
    } else {
        model.pi().to_vec()
    };

    let mut trans = Vec::with_capacity(j_max * j_max);
    for i in 0..j_max {
        let row = &agg.trans[i * j_max..(i + 1) * j_max];
        let total: f64 = row.iter().sum();
        if total > OCCUPANCY_EPS {
            trans.extend(row.iter().map(|v| v / total));
        } else {
            trans.extend_from_slice(&model.transitions()[i * j_max..(i + 1) * j_max]);
        }
    }

    let mut states = Vec::with_capacity(j_max);
    for j in 0..j_max {
        let old = model.state_params(j);
        let state_total: f64 = (0..k_max).map(|k| agg.zeroth[j * k_max + k]).sum();
        if state_total <= OCCUPANCY_EPS {
            states.push(old);
            continue;
        }
        let mut weights = vec![0.0; k_max];
        let mut means = old.means.clone();
        let mut vars = old.vars.clone();
        for k in 0..k_max {
            let jk = j * k_max + k;
            let n = agg.zeroth[jk];
            if n <= OCCUPANCY_EPS {
                // Dead mixture: keep its shape, give it no weight.
                weights[k] = 0.0;
                continue;
            }
            weights[k] = n / state_total;
            for d in 0..dim {
                let mean = agg.first[jk * dim + d] / n;
                means[k * dim + d] = mean;
                vars[k * dim + d] = (agg.second[jk * dim + d] / n - mean * mean).max(floor[d]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        if wsum > 0.0 {
            weights.iter_mut().for_each(|w| *w /= wsum);
        } else {
            weights = old.weights.clone();
        }
        states.push(GmmParams {
            weights,
            means,
            vars,
        });
    }

    Hmm::new(
        dim,
        pi,
        trans,
        states,
        floor,
        *model.frame_config(),
    )
}

/// Short-time Baum-Welch re-estimation over a corpus of utterances.
///
/// Per iteration, window-token sufficient statistics are accumulated per
/// utterance (in parallel) and merged in corpus order, then the model is
/// re-estimated with floored variances. Utterances shorter than one window
/// are skipped. Returns the re-estimated model and the per-iteration mean
/// window log-likelihood (measured under the model entering the iteration).
pub fn baum_welch_short(
    model: &Hmm,
    corpus: &[FeatureSequence],
    spec: &WindowSpec,
    iterations: usize,
) -> Result<(Hmm, Vec<f64>)> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty training corpus".into()));
    }
    let usable: Vec<&FeatureSequence> =
        corpus.iter().filter(|u| u.len() >= spec.n_w).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no utterance reaches the window length {}",
            spec.n_w
        )));
    }
    let total_frames: usize = usable.iter().map(|u| u.len()).sum();
    let needed = FRAMES_PER_COMPONENT * model.num_states() * model.num_mixtures();
    if total_frames < needed {
        return Err(Error::InsufficientData(format!(
            "{total_frames} training frames < {needed} required for {} states x {} mixtures",
            model.num_states(),
            model.num_mixtures()
        )));
    }

    let mut current = model.clone();
    let mut trace = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let blocks: Vec<OccupancyStats> = usable
            .par_iter()
            .map(|utt| short_time_gamma(&current, utt, spec))
            .collect::<Result<_>>()?;
        let mut agg = OccupancyStats::zeros(
            current.num_states(),
            current.num_mixtures(),
            current.dim(),
            0,
        );
        for block in &blocks {
            agg.merge_accumulated(block);
        }
        trace.push(agg.total_loglik / agg.windows as f64);
        current = reestimate(&current, &agg)
            .map_err(|e| Error::Numerical(format!("iteration {iter}: {e}")))?;
    }
    Ok((current, trace))
}
