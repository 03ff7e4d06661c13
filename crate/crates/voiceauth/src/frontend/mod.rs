//! Audio front-end: WAV decoding, MFCC extraction, cepstral mean
//! subtraction and energy-based voice activity detection.
//!
//! The front-end converts raw PCM audio into [`FeatureSequence`]s of
//! 39-dimensional vectors (13 cepstra including c0, plus delta and
//! delta-delta), each frame carrying its log mel energy for VAD.

mod cms;
mod mfcc;
mod vad;
mod wav;

pub use cms::{sliding_cmn, window_cms};
pub use mfcc::compute_mfcc;
pub use vad::{vad, VadMask, VAD_NEIGHBORHOOD, VAD_OFFSET_DB};
pub use wav::{read_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of static cepstral coefficients (c0..c12).
pub const NUM_CEPSTRA: usize = 13;
/// Full feature dimension: statics + delta + delta-delta.
pub const FEATURE_DIM: usize = 3 * NUM_CEPSTRA;
/// Triangular mel filters spanning 0..Nyquist.
pub const NUM_MEL_FILTERS: usize = 23;
/// Pre-emphasis coefficient.
pub const PRE_EMPHASIS: f64 = 0.97;
/// Energy floor applied before taking logs; keeps silence finite.
pub const ENERGY_FLOOR: f64 = 1e-10;
/// Regression half-width for delta coefficients.
pub const DELTA_WINDOW: usize = 2;

/// Mono 16-bit PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis frame geometry. Defaults: 25 ms frames every 10 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Frame duration in seconds.
    pub duration_s: f64,
    /// Frame shift in seconds.
    pub shift_s: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            duration_s: 0.025,
            shift_s: 0.010,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shift_s > 0.0 && self.shift_s <= self.duration_s) {
            return Err(Error::InvalidArgument(format!(
                "frame config requires 0 < shift ({}) <= duration ({})",
                self.shift_s, self.duration_s
            )));
        }
        Ok(())
    }

    /// Frame length in samples at the given rate.
    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.duration_s * sample_rate as f64).round() as usize
    }

    /// Frame shift in samples at the given rate.
    pub fn frame_shift(&self, sample_rate: u32) -> usize {
        (self.shift_s * sample_rate as f64).round() as usize
    }
}

/// Time-ordered feature vectors with per-frame log mel energy.
///
/// The universal currency between modules. `dim` is 39 for MFCC output but
/// the container itself is dimension-agnostic so synthetic corpora and
/// small test fixtures can use it too.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    dim: usize,
    data: Vec<f64>,
    log_energy: Vec<f64>,
    config: FrameConfig,
}

impl FeatureSequence {
    pub fn new(
        dim: usize,
        data: Vec<f64>,
        log_energy: Vec<f64>,
        config: FrameConfig,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be > 0".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "feature data length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        let frames = data.len() / dim;
        if log_energy.len() != frames {
            return Err(Error::InvalidArgument(format!(
                "log energy length {} does not match frame count {}",
                log_energy.len(),
                frames
            )));
        }
        if frames == 0 {
            return Err(Error::EmptyInput("feature sequence has no frames".into()));
        }
        if log_energy.iter().any(|e| !e.is_finite()) {
            return Err(Error::Numerical("non-finite log mel energy".into()));
        }
        Ok(Self {
            dim,
            data,
            log_energy,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of frames T.
    pub fn len(&self) -> usize {
        self.log_energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_energy.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn log_energy(&self) -> &[f64] {
        &self.log_energy
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Contiguous sub-sequence `[start, start + count)`.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.len() {
            return Err(Error::Range(format!(
                "slice [{start}, {}) exceeds {} frames",
                start + count,
                self.len()
            )));
        }
        Ok(Self {
            dim: self.dim,
            data: self.data[start * self.dim..(start + count) * self.dim].to_vec(),
            log_energy: self.log_energy[start..start + count].to_vec(),
            config: self.config,
        })
    }

    /// Writes the debugging dump format: one text line per frame,
    /// `dim + 1` space-separated fields (features then log mel energy).
    pub fn save_dump(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in 0..self.len() {
            let mut line = String::new();
            for v in self.frame(t) {
                line.push_str(&format!("{v} "));
            }
            line.push_str(&format!("{}", self.log_energy[t]));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the dump format back. The last field of each line is the log
    /// mel energy; everything before it is the feature vector.
    pub fn load_dump(path: &std::path::Path, config: FrameConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut dim = 0usize;
        let mut data = Vec::new();
        let mut log_energy = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 {
                return Err(Error::Format(format!(
                    "{}: line {} has {} fields, need at least 2",
                    path.display(),
                    ln + 1,
                    fields.len()
                )));
            }
            if dim == 0 {
                dim = fields.len() - 1;
            } else if fields.len() - 1 != dim {
                return Err(Error::Format(format!(
                    "{}: line {} has {} feature fields, expected {}",
                    path.display(),
                    ln + 1,
                    fields.len() - 1,
                    dim
                )));
            }
            for f in &fields[..dim] {
                data.push(f.parse::<f64>().map_err(|e| {
                    Error::Format(format!("{}: line {}: {e}", path.display(), ln + 1))
                })?);
            }
            log_energy.push(fields[dim].parse::<f64>().map_err(|e| {
                Error::Format(format!("{}: line {}: {e}", path.display(), ln + 1))
            })?);
        }
        Self::new(dim, data, log_energy, config)
    }
}
