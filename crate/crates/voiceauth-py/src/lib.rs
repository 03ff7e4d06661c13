//! Python bindings: the main model types and operations of the engine.
//!
//! The compiled module is named `voiceauth_py`. Feature sequences cross the
//! boundary as plain `list[list[float]]` frames; everything heavier stays
//! on the Rust side.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use voiceauth::adapt::{map_adapt, MapConfig};
use voiceauth::eval::{weer as weer_impl, Trial};
use voiceauth::frontend::{
    compute_mfcc, read_wav as read_wav_impl, sliding_cmn, vad as vad_impl, AudioSignal,
    FeatureSequence, FrameConfig, VadMask,
};
use voiceauth::hmm::{
    baum_welch_short, kmeans_init, sliding_viterbi, viterbi_loglik, Hmm, TrellisMode, WindowSpec,
};
use voiceauth::mve::pair_io::{load_pair, save_pair, PairMetadata};
use voiceauth::mve::SpeakerModelPair;
use voiceauth::stream::{authenticate_stream, stream_latency_report, Decision};

fn to_py_err(e: voiceauth::Error) -> PyErr {
    match e {
        voiceauth::Error::Io(err) => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn frames_to_sequence(frames: Vec<Vec<f64>>) -> PyResult<FeatureSequence> {
    let dim = frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| PyValueError::new_err("empty frame list"))?;
    if frames.iter().any(|f| f.len() != dim) {
        return Err(PyValueError::new_err("ragged frame list"));
    }
    let t = frames.len();
    let data = frames.into_iter().flatten().collect();
    FeatureSequence::new(dim, data, vec![1.0; t], FrameConfig::default()).map_err(to_py_err)
}

fn corpus_to_sequences(corpus: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<FeatureSequence>> {
    corpus.into_iter().map(frames_to_sequence).collect()
}

/// Crate version string.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Decision latency in seconds: `(n_w - 1) * shift + frame_duration`.
#[pyfunction]
#[pyo3(signature = (n_w, frame_duration=0.025, frame_shift=0.010))]
fn latency(n_w: usize, frame_duration: f64, frame_shift: f64) -> PyResult<f64> {
    let spec = WindowSpec::new(n_w, 1).map_err(to_py_err)?;
    Ok(stream_latency_report(
        &spec,
        &FrameConfig {
            duration_s: frame_duration,
            shift_s: frame_shift,
        },
    ))
}

/// Reads a PCM 16-bit mono WAV file: returns (samples, sample_rate).
#[pyfunction]
fn read_wav(path: std::path::PathBuf) -> PyResult<(Vec<i16>, u32)> {
    let audio = read_wav_impl(&path).map_err(to_py_err)?;
    Ok((audio.samples, audio.sample_rate))
}

/// 39-dim MFCC extraction: returns (frames, log_mel_energies).
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, frame_duration=0.025, frame_shift=0.010, cms_window=0))]
fn mfcc(
    samples: Vec<i16>,
    sample_rate: u32,
    frame_duration: f64,
    frame_shift: f64,
    cms_window: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let audio = AudioSignal::new(samples, sample_rate).map_err(to_py_err)?;
    let cfg = FrameConfig {
        duration_s: frame_duration,
        shift_s: frame_shift,
    };
    let mut feats = compute_mfcc(&audio, &cfg).map_err(to_py_err)?;
    if cms_window > 0 {
        feats = sliding_cmn(&feats, cms_window).map_err(to_py_err)?;
    }
    let rows = (0..feats.len()).map(|t| feats.frame(t).to_vec()).collect();
    Ok((rows, feats.log_energy().to_vec()))
}

/// Energy VAD over per-frame log mel energies: returns speech flags.
#[pyfunction]
#[pyo3(signature = (log_energies, neighborhood=80, offset_db=6.0))]
fn vad(log_energies: Vec<f64>, neighborhood: usize, offset_db: f64) -> PyResult<Vec<bool>> {
    let t = log_energies.len();
    let seq = FeatureSequence::new(1, vec![0.0; t], log_energies, FrameConfig::default())
        .map_err(to_py_err)?;
    Ok(vad_impl(&seq, neighborhood, offset_db).flags().to_vec())
}

/// Window-based equal error rate over raw scores:
/// returns (weer_percent, threshold).
#[pyfunction]
fn weer(target_scores: Vec<f64>, impostor_scores: Vec<f64>) -> PyResult<(f64, f64)> {
    let trials: Vec<Trial> = target_scores
        .iter()
        .map(|&score| Trial {
            score,
            is_target: true,
            vad_speech: true,
        })
        .chain(impostor_scores.iter().map(|&score| Trial {
            score,
            is_target: false,
            vad_speech: true,
        }))
        .collect();
    let report = weer_impl(&trials).map_err(to_py_err)?;
    Ok((report.weer, report.weer_threshold))
}

/// An ergodic HMM/GMM speaker model.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: Hmm,
}

#[pymethods]
impl PyModel {
    /// K-means initialization over a corpus of utterances
    /// (list of utterances, each a list of frames).
    #[staticmethod]
    fn kmeans_init(
        corpus: Vec<Vec<Vec<f64>>>,
        states: usize,
        mixtures: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let seqs = corpus_to_sequences(corpus)?;
        Ok(Self {
            inner: kmeans_init(&seqs, states, mixtures, seed).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: voiceauth::hmm::load_model(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        voiceauth::hmm::save_model(&path, &self.inner).map_err(to_py_err)
    }

    #[getter]
    fn states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn mixtures(&self) -> usize {
        self.inner.num_mixtures()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Short-time Baum-Welch re-estimation; returns the per-iteration mean
    /// window log-likelihood trace.
    #[pyo3(signature = (corpus, n_w, stride=1, iterations=5))]
    fn train(
        &mut self,
        corpus: Vec<Vec<Vec<f64>>>,
        n_w: usize,
        stride: usize,
        iterations: usize,
    ) -> PyResult<Vec<f64>> {
        let seqs = corpus_to_sequences(corpus)?;
        let spec = WindowSpec::new(n_w, stride).map_err(to_py_err)?;
        let (model, trace) =
            baum_welch_short(&self.inner, &seqs, &spec, iterations).map_err(to_py_err)?;
        self.inner = model;
        Ok(trace)
    }

    /// MAP adaptation toward the given enrollment utterances; returns the
    /// adapted model and leaves `self` (the prior) untouched.
    #[pyo3(signature = (enrollment, n_w, stride=1, eta=16.0, iterations=3))]
    fn adapt(
        &self,
        enrollment: Vec<Vec<Vec<f64>>>,
        n_w: usize,
        stride: usize,
        eta: f64,
        iterations: usize,
    ) -> PyResult<Self> {
        let seqs = corpus_to_sequences(enrollment)?;
        let spec = WindowSpec::new(n_w, stride).map_err(to_py_err)?;
        let cfg = MapConfig {
            eta_weight: eta,
            eta_mean: eta,
            eta_var: eta,
            iterations,
        };
        Ok(Self {
            inner: map_adapt(&self.inner, &seqs, &spec, &cfg).map_err(to_py_err)?,
        })
    }

    /// Frame-normalized Viterbi log-likelihood of one utterance.
    fn score(&self, frames: Vec<Vec<f64>>) -> PyResult<f64> {
        let seq = frames_to_sequence(frames)?;
        Ok(viterbi_loglik(&self.inner, &seq)
            .map_err(to_py_err)?
            .norm_loglik)
    }

    /// Per-window normalized scores from one growing trellis:
    /// returns (anchor_frame, score) pairs.
    #[pyo3(signature = (frames, n_w, stride=1))]
    fn sliding_scores(
        &self,
        frames: Vec<Vec<f64>>,
        n_w: usize,
        stride: usize,
    ) -> PyResult<Vec<(usize, f64)>> {
        let seq = frames_to_sequence(frames)?;
        let spec = WindowSpec::new(n_w, stride).map_err(to_py_err)?;
        let out = sliding_viterbi(&self.inner, &seq, &spec, TrellisMode::Growing)
            .map_err(to_py_err)?;
        Ok(out.scores.iter().map(|w| (w.anchor, w.score)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(states={}, mixtures={}, dim={})",
            self.inner.num_states(),
            self.inner.num_mixtures(),
            self.inner.dim()
        )
    }
}

/// A registered (target, anti-target) model pair with its threshold.
#[pyclass(name = "Pair")]
struct PyPair {
    inner: SpeakerModelPair,
}

#[pymethods]
impl PyPair {
    #[new]
    #[pyo3(signature = (target, anti_target, threshold=0.0))]
    fn new(target: PyModel, anti_target: PyModel, threshold: f64) -> PyResult<Self> {
        Ok(Self {
            inner: SpeakerModelPair::new(target.inner, anti_target.inner, threshold)
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let (pair, _) = load_pair(&path).map_err(to_py_err)?;
        Ok(Self { inner: pair })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        let metadata = PairMetadata {
            si_model_hash: String::new(),
            map_config: MapConfig::default(),
            mve_trained: false,
        };
        save_pair(&path, &self.inner, &metadata).map_err(to_py_err)
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[setter]
    fn set_threshold(&mut self, value: f64) {
        self.inner.threshold = value;
    }

    /// Scores every window of a feature stream: returns rows of
    /// (anchor_frame, llr, decision) with decision in
    /// {"accept", "reject", "abstain"}.
    #[pyo3(signature = (frames, n_w, stride=1, speech_flags=None))]
    fn authenticate(
        &self,
        frames: Vec<Vec<f64>>,
        n_w: usize,
        stride: usize,
        speech_flags: Option<Vec<bool>>,
    ) -> PyResult<Vec<(usize, f64, String)>> {
        let seq = frames_to_sequence(frames)?;
        let mask = match speech_flags {
            Some(flags) => VadMask::from_flags(flags),
            None => VadMask::all_speech(seq.len()),
        };
        let spec = WindowSpec::new(n_w, stride).map_err(to_py_err)?;
        let stream = authenticate_stream(&self.inner, &seq, &mask, &spec, self.inner.threshold)
            .map_err(to_py_err)?;
        Ok(stream
            .entries()
            .iter()
            .map(|e| (e.anchor, e.llr, e.decision.as_str().to_string()))
            .collect())
    }

    /// Accepted fraction over non-abstained windows of a scored stream.
    #[pyo3(signature = (frames, n_w, stride=1))]
    fn accept_fraction(&self, frames: Vec<Vec<f64>>, n_w: usize, stride: usize) -> PyResult<f64> {
        let rows = self.authenticate(frames, n_w, stride, None)?;
        let decided = rows
            .iter()
            .filter(|(_, _, d)| d != Decision::Abstain.as_str())
            .count();
        if decided == 0 {
            return Err(PyValueError::new_err("every window abstained"));
        }
        let accepts = rows.iter().filter(|(_, _, d)| d == "accept").count();
        Ok(accepts as f64 / decided as f64)
    }

    fn __repr__(&self) -> String {
        format!(
            "Pair(states={}, mixtures={}, dim={}, threshold={})",
            self.inner.target.num_states(),
            self.inner.target.num_mixtures(),
            self.inner.target.dim(),
            self.inner.threshold
        )
    }
}

#[pymodule]
fn voiceauth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(latency, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(vad, m)?)?;
    m.add_function(wrap_pyfunction!(weer, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPair>()?;
    Ok(())
}
