//! Corpus manifest: one tab-separated line per utterance.
//!
//! Columns: id, path (relative to the manifest), speaker, role, format.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Train,
    Enroll,
    Test,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Enroll => "enroll",
            Role::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "enroll" => Ok(Role::Enroll),
            "test" => Ok(Role::Test),
            other => Err(Error::Manifest(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Wav,
    Features,
}

impl FileFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileFormat::Wav => "wav",
            FileFormat::Features => "features",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wav" => Ok(FileFormat::Wav),
            "features" => Ok(FileFormat::Features),
            other => Err(Error::Manifest(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// Path as written in the manifest (relative to the manifest file).
    pub rel_path: String,
    pub speaker: String,
    pub role: Role,
    pub format: FileFormat,
}

impl ManifestEntry {
    pub fn resolved_path(&self, base: &Path) -> PathBuf {
        base.join(&self.rel_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl CorpusManifest {
    /// Parses and validates a manifest file: ids unique, referenced paths
    /// resolvable, and no utterance shared between enroll and test roles.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base_dir = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Manifest(format!(
                    "{}: line {}: expected 5 tab-separated fields, got {}",
                    path.display(),
                    ln + 1,
                    fields.len()
                )));
            }
            entries.push(ManifestEntry {
                id: fields[0].to_string(),
                rel_path: fields[1].to_string(),
                speaker: fields[2].to_string(),
                role: Role::parse(fields[3])?,
                format: FileFormat::parse(fields[4])?,
            });
        }
        let manifest = Self { entries, base_dir };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(&e.id) {
                return Err(Error::Manifest(format!("duplicate utterance id {:?}", e.id)));
            }
            let p = e.resolved_path(&self.base_dir);
            if !p.exists() {
                return Err(Error::Manifest(format!(
                    "entry {:?}: path {} does not exist",
                    e.id,
                    p.display()
                )));
            }
        }
        // Enrollment and test material must not overlap.
        let enroll_paths: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.role == Role::Enroll)
            .map(|e| e.rel_path.as_str())
            .collect();
        for e in self.entries.iter().filter(|e| e.role == Role::Test) {
            if enroll_paths.contains(e.rel_path.as_str()) {
                return Err(Error::Manifest(format!(
                    "entry {:?}: {} appears in both enroll and test roles",
                    e.id, e.rel_path
                )));
            }
        }
        Ok(())
    }

    /// Writes the canonical tab-separated form.
    pub fn save(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.id,
                e.rel_path,
                e.speaker,
                e.role.as_str(),
                e.format.as_str()
            )?;
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Distinct speakers in stable (sorted) order.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.entries.iter().map(|e| &e.speaker).collect();
        set.into_iter().cloned().collect()
    }

    pub fn entries_for(&self, speaker: &str, role: Role) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.speaker == speaker && e.role == role)
            .collect()
    }

    pub fn entries_with_role(&self, role: Role) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.role == role).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), "0 0\n").unwrap();
    }

    #[test]
    fn loads_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.feat");
        touch(dir.path(), "b.feat");
        let m = write(
            dir.path(),
            "manifest.tsv",
            "u1\ta.feat\tspk0\ttrain\tfeatures\nu2\tb.feat\tspk1\ttest\tfeatures\n",
        );
        let manifest = CorpusManifest::load(&m).unwrap();
        assert_eq!(manifest.entries().len(), 2);
        assert_eq!(manifest.speakers(), vec!["spk0", "spk1"]);

        let saved = dir.path().join("again.tsv");
        manifest.save(&saved).unwrap();
        let reloaded = CorpusManifest::load(&saved).unwrap();
        // Canonical form is a fixpoint.
        let saved2 = dir.path().join("thrice.tsv");
        reloaded.save(&saved2).unwrap();
        assert_eq!(
            std::fs::read(&saved).unwrap(),
            std::fs::read(&saved2).unwrap()
        );
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.feat");
        let m = write(
            dir.path(),
            "manifest.tsv",
            "u1\ta.feat\tspk0\ttrain\tfeatures\nu1\ta.feat\tspk0\ttest\tfeatures\n",
        );
        let err = CorpusManifest::load(&m).unwrap_err();
        assert!(err.to_string().contains("u1"));
    }

    #[test]
    fn missing_path_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "manifest.tsv", "u1\tnope.feat\tspk0\ttrain\tfeatures\n");
        let err = CorpusManifest::load(&m).unwrap_err();
        assert!(err.to_string().contains("nope.feat"));
    }

    #[test]
    fn enroll_test_overlap_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.feat");
        let m = write(
            dir.path(),
            "manifest.tsv",
            "u1\ta.feat\tspk0\tenroll\tfeatures\nu2\ta.feat\tspk0\ttest\tfeatures\n",
        );
        let err = CorpusManifest::load(&m).unwrap_err();
        assert!(err.to_string().contains("enroll and test"));
    }

    #[test]
    fn unknown_role_or_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.feat");
        let m = write(dir.path(), "m1.tsv", "u1\ta.feat\tspk0\tdev\tfeatures\n");
        assert!(CorpusManifest::load(&m).is_err());
        let m = write(dir.path(), "m2.tsv", "u1\ta.feat\tspk0\ttrain\tflac\n");
        assert!(CorpusManifest::load(&m).is_err());
    }
}
