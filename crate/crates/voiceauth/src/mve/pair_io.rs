//! Speaker model pair persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::MapConfig;
use crate::error::{Error, Result};
use crate::hmm::io::ModelDoc;
use crate::mve::SpeakerModelPair;

pub const PAIR_FORMAT: &str = "voiceauth-pair";
pub const PAIR_VERSION: u32 = 1;

/// Provenance carried alongside the models.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairMetadata {
    /// FNV-1a hash of the source SI model file.
    pub si_model_hash: String,
    pub map_config: MapConfig,
    /// Whether MVE training ran after MAP adaptation.
    pub mve_trained: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairDoc {
    pub format: String,
    pub version: u32,
    pub threshold: f64,
    pub metadata: PairMetadata,
    pub target: ModelDoc,
    pub anti_target: ModelDoc,
}

/// FNV-1a over raw bytes; good enough to pin model provenance.
pub fn fnv1a_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

pub fn save_pair(path: &Path, pair: &SpeakerModelPair, metadata: &PairMetadata) -> Result<()> {
    let doc = PairDoc {
        format: PAIR_FORMAT.to_string(),
        version: PAIR_VERSION,
        threshold: pair.threshold,
        metadata: metadata.clone(),
        target: ModelDoc::from_model(&pair.target),
        anti_target: ModelDoc::from_model(&pair.anti_target),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_pair(path: &Path) -> Result<(SpeakerModelPair, PairMetadata)> {
    let text = std::fs::read_to_string(path)?;
    let doc: PairDoc = serde_json::from_str(&text)?;
    if doc.format != PAIR_FORMAT {
        return Err(Error::Format(format!(
            "pair format {:?}, expected {PAIR_FORMAT:?}",
            doc.format
        )));
    }
    if doc.version != PAIR_VERSION {
        return Err(Error::Format(format!(
            "pair version {}, this build reads {PAIR_VERSION}",
            doc.version
        )));
    }
    let pair = SpeakerModelPair::new(
        doc.target.into_model()?,
        doc.anti_target.into_model()?,
        doc.threshold,
    )?;
    Ok((pair, doc.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mve::tests::gaussian_model;

    #[test]
    fn pair_file_round_trips_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let pair = SpeakerModelPair::new(
            gaussian_model(0.5, 1.25, 3),
            gaussian_model(-0.5, 0.75, 3),
            0.1234567890123456,
        )
        .unwrap();
        let meta = PairMetadata {
            si_model_hash: fnv1a_hash(b"model-bytes"),
            map_config: MapConfig::default(),
            mve_trained: true,
        };
        save_pair(&p1, &pair, &meta).unwrap();
        let (loaded, meta2) = load_pair(&p1).unwrap();
        assert_eq!(meta, meta2);
        save_pair(&p2, &loaded, &meta2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(fnv1a_hash(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hash(b"a"), fnv1a_hash(b"a"));
        assert_ne!(fnv1a_hash(b"a"), fnv1a_hash(b"b"));
    }
}
