//! Run configuration: one JSON file, every field optional.
//!
//! Defaults mirror the nominal operating point: 1.01 s decision window
//! (101 frames at 10 ms shift), 1 state, 512 mixtures, 8 kHz audio.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::MapConfig;
use crate::error::Result;
use crate::frontend::{FrameConfig, VAD_NEIGHBORHOOD, VAD_OFFSET_DB};
use crate::hmm::WindowSpec;
use crate::mve::MveConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdPolicy {
    /// Operating threshold calibrated at the WEER point of held-out scores.
    Weer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frame: FrameConfig,
    /// Expected input sample rate; a mismatching WAV header warns but is
    /// accepted as-is (no resampling).
    pub sample_rate: u32,
    pub window: WindowSpec,
    /// Window-start decimation during training only (1 = every frame).
    pub train_stride: usize,
    pub states: usize,
    pub mixtures: usize,
    pub si_iterations: usize,
    pub map: MapConfig,
    pub mve: MveConfig,
    pub vad_neighborhood: usize,
    pub vad_offset_db: f64,
    pub threshold_policy: ThresholdPolicy,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            sample_rate: 8000,
            window: WindowSpec::default(),
            train_stride: 1,
            states: 1,
            mixtures: 512,
            si_iterations: 5,
            map: MapConfig::default(),
            mve: MveConfig::default(),
            vad_neighborhood: VAD_NEIGHBORHOOD,
            vad_offset_db: VAD_OFFSET_DB,
            threshold_policy: ThresholdPolicy::Weer,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.window.validate()?;
        self.map.validate()?;
        self.mve.validate()?;
        WindowSpec::new(self.window.n_w, self.train_stride)?;
        if self.states == 0 || self.mixtures == 0 {
            return Err(crate::Error::InvalidArgument(
                "states and mixtures must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training window spec: test-length windows on the training stride.
    pub fn train_window(&self) -> WindowSpec {
        WindowSpec {
            n_w: self.window.n_w,
            stride: self.train_stride,
        }
    }
}
