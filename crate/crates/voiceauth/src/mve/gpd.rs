//! Generalized probabilistic descent on the MVE loss.
//!
//! Each epoch fixes the Viterbi alignment of every token under both models,
//! then walks the shuffled tokens applying online gradient updates with a
//! decaying step. Gradients are taken in transformed coordinates so the
//! structural invariants survive every update: means directly, variances
//! through `v = ln(var - floor)`, mixture weights through softmax logits.
//! Transitions (and initial probabilities) stay frozen unless unfrozen by
//! configuration.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::hmm::{sliding_scores_and_paths, GmmParams, Hmm};
use crate::mve::loss::{empirical_error_rates, loss_from_scores, sigmoid};
use crate::mve::{MveConfig, SpeakerModelPair, TokenClass, WindowToken};

const LN_2PI: f64 = 1.8378770664093453;

/// One row of the training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub empirical_wmde: f64,
    pub empirical_wfae: f64,
    pub step_size: f64,
}

/// Model parameters in descent coordinates.
#[derive(Clone)]
pub(crate) struct GpdParams {
    j: usize,
    k: usize,
    dim: usize,
    pub(crate) means: Vec<f64>,
    /// v = ln(var - floor); keeps every variance above the floor.
    pub(crate) vvars: Vec<f64>,
    /// Weight logits per (state, mixture); kept log-softmax-normalized.
    pub(crate) logits: Vec<f64>,
    /// Transition logits per (i, j); only updated when unfrozen.
    pub(crate) trans_logits: Vec<f64>,
    floor: Vec<f64>,
}

impl GpdParams {
    pub(crate) fn from_model(model: &Hmm) -> Self {
        let j = model.num_states();
        let k = model.num_mixtures();
        let dim = model.dim();
        let floor = model.var_floor().to_vec();
        let mut means = Vec::with_capacity(j * k * dim);
        let mut vvars = Vec::with_capacity(j * k * dim);
        let mut logits = Vec::with_capacity(j * k);
        for s in 0..j {
            let p = model.state_params(s);
            means.extend_from_slice(&p.means);
            for m in 0..k {
                for d in 0..dim {
                    let excess = (p.vars[m * dim + d] - floor[d]).max(floor[d] * 1e-9 + 1e-300);
                    vvars.push(excess.ln());
                }
                logits.push(p.weights[m].max(1e-300).ln());
            }
        }
        let trans_logits = model.transitions().iter().map(|&a| a.max(1e-300).ln()).collect();
        Self {
            j,
            k,
            dim,
            means,
            vvars,
            logits,
            trans_logits,
            floor,
        }
    }

    /// Materializes a validated model, taking pi (and transitions, when
    /// frozen) from the prototype.
    pub(crate) fn to_model(&self, prototype: &Hmm, frozen_transitions: bool) -> Result<Hmm> {
        let mut states = Vec::with_capacity(self.j);
        for s in 0..self.j {
            let mut weights = Vec::with_capacity(self.k);
            let base = s * self.k;
            let lse = log_sum_exp_slice(&self.logits[base..base + self.k]);
            for m in 0..self.k {
                weights.push((self.logits[base + m] - lse).exp());
            }
            let wsum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= wsum);
            let mut vars = Vec::with_capacity(self.k * self.dim);
            for m in 0..self.k {
                for d in 0..self.dim {
                    let idx = (s * self.k + m) * self.dim + d;
                    vars.push(self.floor[d] + self.vvars[idx].exp());
                }
            }
            states.push(GmmParams {
                weights,
                means: self.means[s * self.k * self.dim..(s + 1) * self.k * self.dim].to_vec(),
                vars,
            });
        }
        let trans = if frozen_transitions {
            prototype.transitions().to_vec()
        } else {
            let mut t = Vec::with_capacity(self.j * self.j);
            for i in 0..self.j {
                let row = &self.trans_logits[i * self.j..(i + 1) * self.j];
                let lse = log_sum_exp_slice(row);
                let mut probs: Vec<f64> = row.iter().map(|&x| (x - lse).exp()).collect();
                let sum: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= sum);
                t.extend(probs);
            }
            t
        };
        Hmm::new(
            self.dim,
            prototype.pi().to_vec(),
            trans,
            states,
            self.floor.clone(),
            *prototype.frame_config(),
        )
    }

    fn renormalize_logits(&mut self) {
        for s in 0..self.j {
            let base = s * self.k;
            let lse = log_sum_exp_slice(&self.logits[base..base + self.k]);
            for m in 0..self.k {
                self.logits[base + m] -= lse;
            }
        }
    }

    /// Current variances, used as the mean-update preconditioner.
    fn variances(&self) -> Vec<f64> {
        self.vvars
            .iter()
            .enumerate()
            .map(|(i, &v)| self.floor[i % self.dim] + v.exp())
            .collect()
    }
}

fn log_sum_exp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Gradient buffers mirroring [`GpdParams`] layout.
#[derive(Debug, Clone)]
pub(crate) struct GradBuf {
    pub(crate) means: Vec<f64>,
    pub(crate) vvars: Vec<f64>,
    pub(crate) logits: Vec<f64>,
    pub(crate) trans: Vec<f64>,
}

impl GradBuf {
    fn zeros(p: &GpdParams) -> Self {
        Self {
            means: vec![0.0; p.means.len()],
            vvars: vec![0.0; p.vvars.len()],
            logits: vec![0.0; p.logits.len()],
            trans: vec![0.0; p.trans_logits.len()],
        }
    }

    fn clear(&mut self) {
        self.means.iter_mut().for_each(|v| *v = 0.0);
        self.vvars.iter_mut().for_each(|v| *v = 0.0);
        self.logits.iter_mut().for_each(|v| *v = 0.0);
        self.trans.iter_mut().for_each(|v| *v = 0.0);
    }

    fn axpy_into(&self, scale: f64, out: &mut GradBuf) {
        for (o, g) in out.means.iter_mut().zip(&self.means) {
            *o += scale * g;
        }
        for (o, g) in out.vvars.iter_mut().zip(&self.vvars) {
            *o += scale * g;
        }
        for (o, g) in out.logits.iter_mut().zip(&self.logits) {
            *o += scale * g;
        }
        for (o, g) in out.trans.iter_mut().zip(&self.trans) {
            *o += scale * g;
        }
    }

    fn is_finite(&self) -> bool {
        self.means.iter().all(|v| v.is_finite())
            && self.vvars.iter().all(|v| v.is_finite())
            && self.logits.iter().all(|v| v.is_finite())
            && self.trans.iter().all(|v| v.is_finite())
    }
}

/// Frame-normalized window score under a fixed alignment, plus d(score)/d(params)
/// accumulated into `grad`. Transitions enter the score via log-softmax of
/// the transition logits so their gradient is well-defined when unfrozen.
pub(crate) fn window_score_grad(
    p: &GpdParams,
    utt: &FeatureSequence,
    start: usize,
    n_w: usize,
    path: &[usize],
    grad: &mut GradBuf,
) -> f64 {
    let factor = 1.0 / n_w as f64;
    let mut g = 0.0;
    let mut joint = vec![0.0; p.k];
    for tau in 0..n_w {
        let s = path[tau];
        let x = utt.frame(start + tau);
        let base = s * p.k;

        // State log density under softmax weights.
        for m in 0..p.k {
            let idx = (base + m) * p.dim;
            let mut quad = 0.0;
            let mut logdet = 0.0;
            for d in 0..p.dim {
                let var = p.floor[d] + p.vvars[idx + d].exp();
                let diff = x[d] - p.means[idx + d];
                quad += diff * diff / var;
                logdet += var.ln();
            }
            joint[m] =
                p.logits[base + m] - 0.5 * (p.dim as f64 * LN_2PI + logdet) - 0.5 * quad;
        }
        let lse_joint = log_sum_exp_slice(&joint);
        let lse_logits = log_sum_exp_slice(&p.logits[base..base + p.k]);
        g += factor * (lse_joint - lse_logits);

        for m in 0..p.k {
            let resp = (joint[m] - lse_joint).exp();
            let weight = (p.logits[base + m] - lse_logits).exp();
            grad.logits[base + m] += factor * (resp - weight);
            let idx = (base + m) * p.dim;
            for d in 0..p.dim {
                let var = p.floor[d] + p.vvars[idx + d].exp();
                let diff = x[d] - p.means[idx + d];
                grad.means[idx + d] += factor * resp * diff / var;
                grad.vvars[idx + d] +=
                    factor * resp * 0.5 * (diff * diff / var - 1.0) * ((var - p.floor[d]) / var);
            }
        }

        // Transition into this frame from the previous aligned state.
        if tau > 0 {
            let prev = path[tau - 1];
            let row = &p.trans_logits[prev * p.j..(prev + 1) * p.j];
            let lse_row = log_sum_exp_slice(row);
            g += factor * (row[s] - lse_row);
            for jj in 0..p.j {
                let a = (row[jj] - lse_row).exp();
                let indicator = if jj == s { 1.0 } else { 0.0 };
                grad.trans[prev * p.j + jj] += factor * (indicator - a);
            }
        }
    }
    g
}

/// Loss of one token and the loss gradients for both models, under fixed
/// alignments.
#[allow(clippy::too_many_arguments)]
pub(crate) fn token_loss_grads(
    p0: &GpdParams,
    p1: &GpdParams,
    corpus: &[FeatureSequence],
    token: &WindowToken,
    path0: &[usize],
    path1: &[usize],
    cfg: &MveConfig,
    grad0: &mut GradBuf,
    grad1: &mut GradBuf,
) -> f64 {
    grad0.clear();
    grad1.clear();
    let utt = &corpus[token.utterance];
    let g0 = window_score_grad(p0, utt, token.start, token.n_w, path0, grad0);
    let g1 = window_score_grad(p1, utt, token.start, token.n_w, path1, grad1);
    let (weight, d, dd_dg0, dd_dg1) = match token.class {
        TokenClass::Target => (cfg.loss_weight_target, -g0 + g1, -1.0, 1.0),
        TokenClass::Impostor => (cfg.loss_weight_impostor, g0 - g1, 1.0, -1.0),
    };
    let sig = sigmoid(cfg.sigmoid_slope * d);
    let loss = weight * sig;
    let dl_dd = weight * cfg.sigmoid_slope * sig * (1.0 - sig);
    // grad buffers currently hold dg/dtheta; scale into dL/dtheta.
    scale_buf(grad0, dl_dd * dd_dg0);
    scale_buf(grad1, dl_dd * dd_dg1);
    loss
}

fn scale_buf(buf: &mut GradBuf, scale: f64) {
    buf.means.iter_mut().for_each(|v| *v *= scale);
    buf.vvars.iter_mut().for_each(|v| *v *= scale);
    buf.logits.iter_mut().for_each(|v| *v *= scale);
    buf.trans.iter_mut().for_each(|v| *v *= scale);
}

fn apply_update(
    p: &mut GpdParams,
    grad: &GradBuf,
    step: f64,
    update_transitions: bool,
    mean_precond: Option<&[f64]>,
) {
    match mean_precond {
        // Sigma-scaled mean coordinates: step * var * grad, so the move is
        // proportional to (x - mu) instead of (x - mu) / var.
        Some(prec) => {
            for ((v, g), pc) in p.means.iter_mut().zip(&grad.means).zip(prec) {
                *v -= step * pc * g;
            }
        }
        None => {
            for (v, g) in p.means.iter_mut().zip(&grad.means) {
                *v -= step * g;
            }
        }
    }
    for (v, g) in p.vvars.iter_mut().zip(&grad.vvars) {
        *v -= step * g;
    }
    for (v, g) in p.logits.iter_mut().zip(&grad.logits) {
        *v -= step * g;
    }
    if update_transitions {
        for (v, g) in p.trans_logits.iter_mut().zip(&grad.trans) {
            *v -= step * g;
        }
    }
    p.renormalize_logits();
}

/// Numerical self-check: maximum relative error between the analytic token
/// loss gradient and central finite differences with step `h`, probing
/// every mean, log-variance and weight-logit coordinate of both models.
/// The Viterbi alignments are fixed up front (as in training), so the
/// differentiated function is smooth regardless of the state count.
pub fn gradient_check(
    pair: &SpeakerModelPair,
    corpus: &[FeatureSequence],
    token: &WindowToken,
    cfg: &MveConfig,
    h: f64,
) -> Result<f64> {
    token.validate(corpus)?;
    let starts = [token.start];
    let path0 = sliding_scores_and_paths(&pair.target, &corpus[token.utterance], token.n_w, &starts)?
        .remove(0)
        .1;
    let path1 =
        sliding_scores_and_paths(&pair.anti_target, &corpus[token.utterance], token.n_w, &starts)?
            .remove(0)
            .1;
    let p0 = GpdParams::from_model(&pair.target);
    let p1 = GpdParams::from_model(&pair.anti_target);
    let mut grad0 = GradBuf::zeros(&p0);
    let mut grad1 = GradBuf::zeros(&p1);
    token_loss_grads(
        &p0, &p1, corpus, token, &path0, &path1, cfg, &mut grad0, &mut grad1,
    );

    let eval = |a: &GpdParams, b: &GpdParams| -> f64 {
        let mut s0 = GradBuf::zeros(a);
        let mut s1 = GradBuf::zeros(b);
        let utt = &corpus[token.utterance];
        let g0 = window_score_grad(a, utt, token.start, token.n_w, &path0, &mut s0);
        let g1 = window_score_grad(b, utt, token.start, token.n_w, &path1, &mut s1);
        let (weight, d) = match token.class {
            TokenClass::Target => (cfg.loss_weight_target, -g0 + g1),
            TokenClass::Impostor => (cfg.loss_weight_impostor, g0 - g1),
        };
        weight * sigmoid(cfg.sigmoid_slope * d)
    };

    let mut max_rel: f64 = 0.0;
    // Coordinate accessors per model: means, vvars, logits.
    type Field = fn(&mut GpdParams) -> &mut Vec<f64>;
    let fields: [(Field, usize); 3] = [
        (|p| &mut p.means, 0),
        (|p| &mut p.vvars, 1),
        (|p| &mut p.logits, 2),
    ];
    for which in 0..2usize {
        for (field, kind) in fields {
            let len = {
                let mut a = p0.clone();
                let mut b = p1.clone();
                let target = if which == 0 { &mut a } else { &mut b };
                field(target).len()
            };
            for i in 0..len {
                let mut a = p0.clone();
                let mut b = p1.clone();
                field(if which == 0 { &mut a } else { &mut b })[i] += h;
                let plus = eval(&a, &b);
                field(if which == 0 { &mut a } else { &mut b })[i] -= 2.0 * h;
                let minus = eval(&a, &b);
                let fd = (plus - minus) / (2.0 * h);
                let analytic = match (which, kind) {
                    (0, 0) => grad0.means[i],
                    (0, 1) => grad0.vvars[i],
                    (0, 2) => grad0.logits[i],
                    (1, 0) => grad1.means[i],
                    (1, 1) => grad1.vvars[i],
                    (_, _) => grad1.logits[i],
                };
                let rel = (analytic - fd).abs() / (analytic.abs() + fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(max_rel)
}

/// Per-token free-alignment scores plus fixed alignments for the epoch.
struct EpochView {
    scored: Vec<(TokenClass, f64, f64)>,
    paths0: Vec<Vec<usize>>,
    paths1: Vec<Vec<usize>>,
}

fn epoch_view(
    m0: &Hmm,
    m1: &Hmm,
    corpus: &[FeatureSequence],
    tokens: &[WindowToken],
    n_w: usize,
) -> Result<EpochView> {
    use std::collections::BTreeMap;
    let mut by_utt: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, t) in tokens.iter().enumerate() {
        by_utt.entry(t.utterance).or_default().push(i);
    }
    let mut scored = vec![(TokenClass::Target, 0.0, 0.0); tokens.len()];
    let mut paths0 = vec![Vec::new(); tokens.len()];
    let mut paths1 = vec![Vec::new(); tokens.len()];
    for (utt_idx, token_ids) in by_utt {
        let starts: Vec<usize> = token_ids.iter().map(|&i| tokens[i].start).collect();
        let sp0 = sliding_scores_and_paths(m0, &corpus[utt_idx], n_w, &starts)?;
        let sp1 = sliding_scores_and_paths(m1, &corpus[utt_idx], n_w, &starts)?;
        for ((&i, (g0, path0)), (g1, path1)) in
            token_ids.iter().zip(sp0.into_iter()).zip(sp1.into_iter())
        {
            scored[i] = (tokens[i].class, g0, g1);
            paths0[i] = path0;
            paths1[i] = path1;
        }
    }
    Ok(EpochView {
        scored,
        paths0,
        paths1,
    })
}

/// Trains the pair with GPD over the target and cohort tokens.
///
/// Returns the updated pair and the per-epoch trace (row 0 is the state
/// before any update). Alignments are refreshed once per epoch; the step
/// decays as `step_n = step_0 * (1 - n / n_total)` over global updates. An
/// epoch that raises the loss by more than 20% halves the step scale for
/// the remainder and training continues.
pub fn gpd_train(
    pair: &SpeakerModelPair,
    corpus: &[FeatureSequence],
    targets: &[WindowToken],
    cohort: &[WindowToken],
    cfg: &MveConfig,
    seed: u64,
) -> Result<(SpeakerModelPair, Vec<TraceRow>)> {
    cfg.validate()?;
    if targets.is_empty() || cohort.is_empty() {
        return Err(Error::InvalidArgument(
            "both target and cohort token sets must be non-empty".into(),
        ));
    }
    let tokens: Vec<WindowToken> = targets.iter().chain(cohort).copied().collect();
    let n_w = tokens[0].n_w;
    for t in &tokens {
        t.validate(corpus)?;
        if t.n_w != n_w {
            return Err(Error::InvalidArgument(
                "all MVE tokens must share one window length".into(),
            ));
        }
    }

    let mut p0 = GpdParams::from_model(&pair.target);
    let mut p1 = GpdParams::from_model(&pair.anti_target);
    let mut grad0 = GradBuf::zeros(&p0);
    let mut grad1 = GradBuf::zeros(&p1);
    let mut acc0 = GradBuf::zeros(&p0);
    let mut acc1 = GradBuf::zeros(&p1);

    let num_batches = tokens.len().div_ceil(cfg.batch_size);
    let n_total = (cfg.epochs * num_batches).max(1);
    let mut update_idx = 0usize;
    let mut step_scale = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let mut prev_loss = f64::INFINITY;
    let mut snapshot: Option<(GpdParams, GpdParams)> = None;

    for epoch in 0..=cfg.epochs {
        let m0 = p0.to_model(&pair.target, cfg.freeze_transitions)?;
        let m1 = p1.to_model(&pair.anti_target, cfg.freeze_transitions)?;
        let view = epoch_view(&m0, &m1, corpus, &tokens, n_w)?;
        let loss = loss_from_scores(&view.scored, cfg);
        let (wmde, wfae) = empirical_error_rates(&view.scored);
        let step_now =
            cfg.initial_step * (1.0 - update_idx as f64 / n_total as f64) * step_scale;
        trace.push(TraceRow {
            epoch,
            loss,
            empirical_wmde: wmde,
            empirical_wfae: wfae,
            step_size: step_now,
        });
        if epoch > 0 && loss > prev_loss * 1.2 {
            step_scale *= 0.5;
            eprintln!(
                "warning: MVE loss rose {prev_loss:.6} -> {loss:.6} in epoch {epoch}; \
                 reverting the epoch and halving the step"
            );
            if let Some((s0, s1)) = &snapshot {
                p0 = s0.clone();
                p1 = s1.clone();
            }
        } else {
            prev_loss = loss;
        }
        if epoch == cfg.epochs {
            break;
        }
        snapshot = Some((p0.clone(), p1.clone()));
        let prec0 = cfg.transform_means.then(|| p0.variances());
        let prec1 = cfg.transform_means.then(|| p1.variances());

        let mut order: Vec<usize> = (0..tokens.len()).collect();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step =
                cfg.initial_step * (1.0 - update_idx as f64 / n_total as f64) * step_scale;
            update_idx += 1;
            if step == 0.0 {
                continue;
            }
            acc0.clear();
            acc1.clear();
            for &ti in batch {
                let token = &tokens[ti];
                token_loss_grads(
                    &p0,
                    &p1,
                    corpus,
                    token,
                    &view.paths0[ti],
                    &view.paths1[ti],
                    cfg,
                    &mut grad0,
                    &mut grad1,
                );
                if !grad0.is_finite() || !grad1.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite gradient on token (utterance {}, start {})",
                        token.utterance, token.start
                    )));
                }
                grad0.axpy_into(1.0, &mut acc0);
                grad1.axpy_into(1.0, &mut acc1);
            }
            apply_update(&mut p0, &acc0, step, !cfg.freeze_transitions, prec0.as_deref());
            apply_update(&mut p1, &acc1, step, !cfg.freeze_transitions, prec1.as_deref());
        }
    }

    let target = p0.to_model(&pair.target, cfg.freeze_transitions)?;
    let anti_target = p1.to_model(&pair.anti_target, cfg.freeze_transitions)?;
    target.validate()?;
    anti_target.validate()?;
    Ok((
        SpeakerModelPair {
            target,
            anti_target,
            threshold: pair.threshold,
        },
        trace,
    ))
}
