//! Versioned JSON persistence for HMM model files.
//!
//! Probabilities are stored in natural (non-log) form; serialization uses
//! the shortest round-tripping decimal representation, so save/load/save is
//! byte-stable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrameConfig;
use crate::hmm::{GmmParams, Hmm};

pub const MODEL_FORMAT: &str = "voiceauth-hmm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct StateDoc {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

/// On-disk model document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format: String,
    pub version: u32,
    pub states: usize,
    pub mixtures: usize,
    pub dim: usize,
    pub frame: FrameConfig,
    pub pi: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub state_params: Vec<StateDoc>,
    pub var_floor: Vec<f64>,
}

impl ModelDoc {
    pub fn from_model(model: &Hmm) -> Self {
        let j = model.num_states();
        let dim = model.dim();
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            states: j,
            mixtures: model.num_mixtures(),
            dim,
            frame: *model.frame_config(),
            pi: model.pi().to_vec(),
            transitions: (0..j)
                .map(|i| model.transitions()[i * j..(i + 1) * j].to_vec())
                .collect(),
            state_params: (0..j)
                .map(|s| {
                    let p = model.state_params(s);
                    StateDoc {
                        weights: p.weights,
                        means: p.means.chunks(dim).map(|c| c.to_vec()).collect(),
                        vars: p.vars.chunks(dim).map(|c| c.to_vec()).collect(),
                    }
                })
                .collect(),
            var_floor: model.var_floor().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<Hmm> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "model format {:?}, expected {MODEL_FORMAT:?}",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model version {}, this build reads {MODEL_VERSION}",
                self.version
            )));
        }
        let states = self
            .state_params
            .into_iter()
            .map(|s| GmmParams {
                weights: s.weights,
                means: s.means.concat(),
                vars: s.vars.concat(),
            })
            .collect();
        Hmm::new(
            self.dim,
            self.pi,
            self.transitions.concat(),
            states,
            self.var_floor,
            self.frame,
        )
    }
}

pub fn save_model(path: &Path, model: &Hmm) -> Result<()> {
    let doc = ModelDoc::from_model(model);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Hmm> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDoc = serde_json::from_str(&text)?;
    doc.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrameConfig;

    fn model() -> Hmm {
        Hmm::new(
            2,
            vec![0.25, 0.75],
            vec![0.1, 0.9, 0.6, 0.4],
            vec![
                GmmParams {
                    weights: vec![0.3333333333333333, 0.6666666666666667],
                    means: vec![0.1, -0.2, 1.5, 2.5],
                    vars: vec![1.0, 0.5, 0.25, 2.0],
                },
                GmmParams {
                    weights: vec![1.0, 0.0],
                    means: vec![-3.0, 4.0, 0.0, 0.0],
                    vars: vec![0.7, 0.7, 1.0, 1.0],
                },
            ],
            vec![1e-4, 1e-4],
            FrameConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn save_load_save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        let m = model();
        save_model(&p1, &m).unwrap();
        let loaded = load_model(&p1).unwrap();
        save_model(&p2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "model file must round-trip bit-for-bit"
        );
    }

    #[test]
    fn loaded_model_preserves_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = model();
        save_model(&p, &m).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(m.pi(), back.pi());
        assert_eq!(m.transitions(), back.transitions());
        for j in 0..2 {
            assert_eq!(m.state_params(j), back.state_params(j));
        }
        assert_eq!(m.var_floor(), back.var_floor());
    }

    #[test]
    fn wrong_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        std::fs::write(&p, "{\"format\":\"other\",\"version\":1}").unwrap();
        assert!(load_model(&p).is_err());
    }
}
