//! Ergodic HMM with per-state diagonal Gaussian mixtures.
//!
//! Houses the model type itself plus the training and scoring algorithms:
//! K-means initialization, log-domain forward-backward, short-time
//! (window-token) Baum-Welch re-estimation, and the growing-trellis sliding
//! Viterbi scorer. All likelihood computation is log-domain throughout.

mod forward;
pub mod io;
mod kmeans;
mod short_time;
mod viterbi;

pub use forward::forward_backward;
pub use io::{load_model, save_model};
pub use kmeans::kmeans_init;
pub use short_time::{baum_welch_short, short_time_gamma};
pub use viterbi::{
    sliding_viterbi, viterbi_loglik, SlidingScores, TrellisCounters, TrellisMode, ViterbiResult,
    WindowScore,
};
pub(crate) use viterbi::sliding_scores_and_paths;

use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, FrameConfig};

const LN_2PI: f64 = 1.8378770664093453;
/// Tolerance for probability simplex checks.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Absolute lower bound on any variance floor.
pub const MIN_VAR_FLOOR: f64 = 1e-10;

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Sliding-window geometry: `n_w` frames per window, `stride` frames
/// between successive window starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub n_w: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { n_w: 101, stride: 1 }
    }
}

impl WindowSpec {
    pub fn new(n_w: usize, stride: usize) -> Result<Self> {
        let spec = Self { n_w, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_w == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(
                "window spec requires n_w >= 1 and stride >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Signal duration one window covers: `(n_w - 1) * shift + frame_dur`.
    pub fn signal_duration_s(&self, frame: &FrameConfig) -> f64 {
        (self.n_w - 1) as f64 * frame.shift_s + frame.duration_s
    }

    /// Window start frames on the stride grid for a `t_max`-frame sequence.
    pub fn starts(&self, t_max: usize) -> impl Iterator<Item = usize> + '_ {
        let n_w = self.n_w;
        (0..)
            .map(move |i| i * self.stride)
            .take_while(move |s| s + n_w <= t_max)
    }

    /// Number of windows the grid yields: `floor((T - n_w) / stride) + 1`.
    pub fn count(&self, t_max: usize) -> usize {
        if t_max < self.n_w {
            0
        } else {
            (t_max - self.n_w) / self.stride + 1
        }
    }
}

/// Mixture parameters of one state: weights on a simplex, per-mixture mean
/// and diagonal variance vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    /// Flattened K x dim.
    pub means: Vec<f64>,
    /// Flattened K x dim, every entry >= the model's variance floor.
    pub vars: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct GmmState {
    pub(crate) weights: Vec<f64>,
    pub(crate) means: Vec<f64>,
    pub(crate) vars: Vec<f64>,
    // Derived caches.
    pub(crate) log_weights: Vec<f64>,
    pub(crate) gconst: Vec<f64>,
    pub(crate) inv_var: Vec<f64>,
}

impl GmmState {
    fn from_params(p: GmmParams, dim: usize) -> Self {
        let mut s = Self {
            weights: p.weights,
            means: p.means,
            vars: p.vars,
            log_weights: Vec::new(),
            gconst: Vec::new(),
            inv_var: Vec::new(),
        };
        s.rebuild(dim);
        s
    }

    pub(crate) fn rebuild(&mut self, dim: usize) {
        let k = self.weights.len();
        self.log_weights = self.weights.iter().map(|&w| w.max(1e-300).ln()).collect();
        self.inv_var = self.vars.iter().map(|&v| 1.0 / v).collect();
        self.gconst = (0..k)
            .map(|m| {
                let vars = &self.vars[m * dim..(m + 1) * dim];
                -0.5 * (dim as f64 * LN_2PI + vars.iter().map(|&v| v.ln()).sum::<f64>())
            })
            .collect();
    }
}

/// Ergodic HMM with per-state diagonal Gaussian mixture emissions.
///
/// Probabilities are stored in natural form (the serialized form); log
/// caches are rebuilt whenever parameters change.
#[derive(Debug, Clone)]
pub struct Hmm {
    dim: usize,
    pub(crate) pi: Vec<f64>,
    /// Row-major J x J transition matrix.
    pub(crate) trans: Vec<f64>,
    pub(crate) states: Vec<GmmState>,
    /// Per-dimension variance floor.
    var_floor: Vec<f64>,
    frame: FrameConfig,
    pub(crate) log_pi: Vec<f64>,
    pub(crate) log_trans: Vec<f64>,
}

impl Hmm {
    pub fn new(
        dim: usize,
        pi: Vec<f64>,
        trans: Vec<f64>,
        states: Vec<GmmParams>,
        var_floor: Vec<f64>,
        frame: FrameConfig,
    ) -> Result<Self> {
        let states: Vec<GmmState> = states
            .into_iter()
            .map(|p| GmmState::from_params(p, dim))
            .collect();
        let mut hmm = Self {
            dim,
            pi,
            trans,
            states,
            var_floor,
            frame,
            log_pi: Vec::new(),
            log_trans: Vec::new(),
        };
        hmm.rebuild_caches();
        hmm.validate()?;
        Ok(hmm)
    }

    pub(crate) fn rebuild_caches(&mut self) {
        self.log_pi = self.pi.iter().map(|&p| p.max(1e-300).ln()).collect();
        self.log_trans = self.trans.iter().map(|&p| p.max(1e-300).ln()).collect();
        let dim = self.dim;
        for s in &mut self.states {
            s.rebuild(dim);
        }
    }

    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    pub fn num_mixtures(&self) -> usize {
        self.states.first().map_or(0, |s| s.weights.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_config(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn var_floor(&self) -> &[f64] {
        &self.var_floor
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transitions(&self) -> &[f64] {
        &self.trans
    }

    pub fn state_params(&self, j: usize) -> GmmParams {
        let s = &self.states[j];
        GmmParams {
            weights: s.weights.clone(),
            means: s.means.clone(),
            vars: s.vars.clone(),
        }
    }

    /// Checks every structural invariant: simplexes sum to one, variances
    /// respect the floor, all parameters finite.
    pub fn validate(&self) -> Result<()> {
        let j = self.num_states();
        if j == 0 {
            return Err(Error::InvalidArgument("model needs at least one state".into()));
        }
        if self.trans.len() != j * j || self.states.len() != j {
            return Err(Error::InvalidArgument("transition/state shape mismatch".into()));
        }
        if self.var_floor.len() != self.dim {
            return Err(Error::InvalidArgument("variance floor dim mismatch".into()));
        }
        if self.var_floor.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidArgument("variance floor must be > 0".into()));
        }
        check_simplex(&self.pi, "initial probabilities")?;
        for (i, row) in self.trans.chunks(j).enumerate() {
            check_simplex(row, &format!("transition row {i}"))?;
        }
        let k = self.num_mixtures();
        for (idx, s) in self.states.iter().enumerate() {
            if s.weights.len() != k || s.means.len() != k * self.dim || s.vars.len() != k * self.dim
            {
                return Err(Error::InvalidArgument(format!(
                    "state {idx} has inconsistent mixture shape"
                )));
            }
            check_simplex(&s.weights, &format!("state {idx} weights"))?;
            for (m, chunk) in s.vars.chunks(self.dim).enumerate() {
                for (d, &v) in chunk.iter().enumerate() {
                    if !v.is_finite() || v < self.var_floor[d] * (1.0 - 1e-12) {
                        return Err(Error::InvalidArgument(format!(
                            "state {idx} mixture {m} dim {d}: variance {v} below floor {}",
                            self.var_floor[d]
                        )));
                    }
                }
            }
            if s.means.iter().any(|m| !m.is_finite()) {
                return Err(Error::Numerical(format!("state {idx} has non-finite mean")));
            }
        }
        Ok(())
    }

    /// Log joint density of mixture `m` in state `j`: `log(w_m N(x; mu_m, var_m))`.
    #[inline]
    pub(crate) fn log_mix_density(&self, j: usize, m: usize, x: &[f64]) -> f64 {
        let s = &self.states[j];
        let dim = self.dim;
        let mean = &s.means[m * dim..(m + 1) * dim];
        let inv = &s.inv_var[m * dim..(m + 1) * dim];
        let mut quad = 0.0;
        for d in 0..dim {
            let diff = x[d] - mean[d];
            quad += diff * diff * inv[d];
        }
        s.log_weights[m] + s.gconst[m] - 0.5 * quad
    }

    /// Log GMM density of state `j` at `x`.
    pub fn log_state_density(&self, j: usize, x: &[f64]) -> f64 {
        let k = self.states[j].weights.len();
        let mix: Vec<f64> = (0..k).map(|m| self.log_mix_density(j, m, x)).collect();
        log_sum_exp(&mix)
    }

    /// Precomputes all per-frame log densities for a feature sequence.
    pub(crate) fn densities(&self, features: &FeatureSequence) -> FrameDensities {
        let t_max = features.len();
        let j_max = self.num_states();
        let k_max = self.num_mixtures();
        let mut mix = vec![0.0; t_max * j_max * k_max];
        let mut state = vec![0.0; t_max * j_max];
        for t in 0..t_max {
            let x = features.frame(t);
            for j in 0..j_max {
                let base = (t * j_max + j) * k_max;
                for m in 0..k_max {
                    mix[base + m] = self.log_mix_density(j, m, x);
                }
                state[t * j_max + j] = log_sum_exp(&mix[base..base + k_max]);
            }
        }
        FrameDensities {
            num_states: j_max,
            num_mix: k_max,
            mix,
            state,
        }
    }
}

fn check_simplex(p: &[f64], label: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{label}: negative or non-finite probability"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument(format!(
            "{label}: probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Per-frame emission log densities, cached once and shared by every
/// window that touches the frame.
pub(crate) struct FrameDensities {
    num_states: usize,
    num_mix: usize,
    /// log(w_m N_m) per (t, j, m).
    mix: Vec<f64>,
    /// logsumexp over mixtures per (t, j).
    state: Vec<f64>,
}

impl FrameDensities {
    #[inline]
    pub(crate) fn state(&self, t: usize, j: usize) -> f64 {
        self.state[t * self.num_states + j]
    }

    #[inline]
    pub(crate) fn mix(&self, t: usize, j: usize, m: usize) -> f64 {
        self.mix[(t * self.num_states + j) * self.num_mix + m]
    }

    /// Mixture responsibility within state `j` at frame `t`.
    #[inline]
    pub(crate) fn responsibility(&self, t: usize, j: usize, m: usize) -> f64 {
        (self.mix(t, j, m) - self.state(t, j)).exp()
    }
}

/// State and mixture occupancies plus accumulated sufficient statistics
/// for one utterance.
///
/// `gamma` and `mix_posterior` are uniform means over the in-range windows
/// containing each frame; the accumulated statistics are plain sums over
/// window tokens, which is what re-estimation consumes.
#[derive(Debug, Clone)]
pub struct OccupancyStats {
    pub(crate) num_states: usize,
    pub(crate) num_mix: usize,
    pub(crate) dim: usize,
    pub(crate) frames: usize,
    /// Mean state posterior per (t, j).
    pub(crate) gamma: Vec<f64>,
    /// Mean mixture posterior per (t, j, k).
    pub(crate) mix_posterior: Vec<f64>,
    /// 0th-order statistic per (j, k), summed over window tokens.
    pub(crate) zeroth: Vec<f64>,
    /// 1st-order statistic per (j, k, d).
    pub(crate) first: Vec<f64>,
    /// Diagonal 2nd-order statistic per (j, k, d).
    pub(crate) second: Vec<f64>,
    /// Transition pair posteriors per (i, j), summed over window tokens.
    pub(crate) trans: Vec<f64>,
    /// Window-initial state posteriors per j, summed over window tokens.
    pub(crate) init: Vec<f64>,
    /// Number of window tokens accumulated.
    pub(crate) windows: usize,
    /// Sum of window log-likelihoods.
    pub(crate) total_loglik: f64,
}

impl OccupancyStats {
    pub(crate) fn zeros(num_states: usize, num_mix: usize, dim: usize, frames: usize) -> Self {
        Self {
            num_states,
            num_mix,
            dim,
            frames,
            gamma: vec![0.0; frames * num_states],
            mix_posterior: vec![0.0; frames * num_states * num_mix],
            zeroth: vec![0.0; num_states * num_mix],
            first: vec![0.0; num_states * num_mix * dim],
            second: vec![0.0; num_states * num_mix * dim],
            trans: vec![0.0; num_states * num_states],
            init: vec![0.0; num_states],
            windows: 0,
            total_loglik: 0.0,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean state posterior `gamma_j(t)`.
    pub fn gamma(&self, t: usize, j: usize) -> f64 {
        self.gamma[t * self.num_states + j]
    }

    /// Mean mixture posterior `gamma_{j,k}(t)`.
    pub fn mix_posterior(&self, t: usize, j: usize, k: usize) -> f64 {
        self.mix_posterior[(t * self.num_states + j) * self.num_mix + k]
    }

    /// Accumulated 0th-order statistic for mixture (j, k).
    pub fn occupancy(&self, j: usize, k: usize) -> f64 {
        self.zeroth[j * self.num_mix + k]
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn total_loglik(&self) -> f64 {
        self.total_loglik
    }

    /// Merges another utterance's accumulated statistics into this one.
    /// Per-frame posteriors stay per-utterance and are not merged.
    pub(crate) fn merge_accumulated(&mut self, other: &OccupancyStats) {
        for (a, b) in self.zeroth.iter_mut().zip(&other.zeroth) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
        for (a, b) in self.trans.iter_mut().zip(&other.trans) {
            *a += b;
        }
        for (a, b) in self.init.iter_mut().zip(&other.init) {
            *a += b;
        }
        self.windows += other.windows;
        self.total_loglik += other.total_loglik;
    }
}
