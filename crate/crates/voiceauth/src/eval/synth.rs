//! Synthetic speaker corpus generation.
//!
//! Draws one random base HMM and derives each speaker's generator by
//! shifting every mixture mean along a random speaker direction whose norm
//! is the configured inter-speaker distance (in units of the within-speaker
//! sigma, which is 1). Separation 0 therefore makes every speaker the same
//! generator. Feature sequences are sampled directly in feature space so
//! the modeling stack can be exercised without the DSP front-end.

use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, FrameConfig};
use crate::hmm::{GmmParams, Hmm};

/// Log mel energy stamped on synthetic frames; far above the silence floor.
const SYNTH_LOG_ENERGY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthRole {
    Train,
    Enroll,
    Test,
}

impl SynthRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthRole::Train => "train",
            SynthRole::Enroll => "enroll",
            SynthRole::Test => "test",
        }
    }
}

/// Corpus shape and generator knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub speakers: usize,
    /// Generator HMM states.
    pub states: usize,
    /// Generator mixtures per state.
    pub mixtures: usize,
    pub dim: usize,
    /// Inter-speaker mean distance in within-speaker sigma units.
    pub separation: f64,
    pub train_utts: usize,
    pub train_secs: f64,
    pub enroll_utts: usize,
    pub enroll_secs: f64,
    pub test_utts: usize,
    pub test_secs: f64,
    /// Multi-speaker spliced streams (for change-point tests).
    pub spliced_streams: usize,
    pub splice_segments: usize,
    pub splice_segment_secs: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            speakers: 8,
            states: 1,
            mixtures: 4,
            dim: 39,
            separation: 6.0,
            train_utts: 1,
            train_secs: 20.0,
            enroll_utts: 3,
            enroll_secs: 12.0,
            test_utts: 2,
            test_secs: 10.0,
            spliced_streams: 2,
            splice_segments: 4,
            splice_segment_secs: 2.0,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 || self.states == 0 || self.mixtures == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "speakers, states, mixtures and dim must all be >= 1".into(),
            ));
        }
        if self.separation < 0.0 {
            return Err(Error::InvalidArgument("separation must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthEntry {
    pub id: String,
    pub speaker: String,
    pub role: SynthRole,
    pub features: FeatureSequence,
}

/// A stream that switches speaker at known change points.
#[derive(Debug, Clone)]
pub struct SplicedStream {
    pub id: String,
    pub features: FeatureSequence,
    /// Ground-truth speaker index per frame.
    pub frame_speakers: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub speaker_ids: Vec<String>,
    pub generators: Vec<Hmm>,
    pub entries: Vec<SynthEntry>,
    pub spliced: Vec<SplicedStream>,
}

impl SynthCorpus {
    pub fn features_for(&self, speaker: &str, role: SynthRole) -> Vec<&FeatureSequence> {
        self.entries
            .iter()
            .filter(|e| e.speaker == speaker && e.role == role)
            .map(|e| &e.features)
            .collect()
    }
}

fn secs_to_frames(secs: f64, frame: &FrameConfig) -> usize {
    (secs / frame.shift_s).round() as usize
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}

fn base_model(rng: &mut ChaCha8Rng, spec: &SynthSpec, frame: FrameConfig) -> Hmm {
    let j = spec.states;
    let k = spec.mixtures;
    let dim = spec.dim;
    let mut trans = Vec::with_capacity(j * j);
    for i in 0..j {
        let mut row = random_simplex(rng, j);
        // Sticky diagonal keeps state runs realistic for j > 1.
        row[i] += 2.0;
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        trans.extend(row);
    }
    let states = (0..j)
        .map(|_| GmmParams {
            weights: random_simplex(rng, k),
            means: (0..k * dim)
                .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            vars: vec![1.0; k * dim],
        })
        .collect();
    Hmm::new(
        dim,
        vec![1.0 / j as f64; j],
        trans,
        states,
        vec![1e-6; dim],
        frame,
    )
    .expect("base generator is valid by construction")
}

fn speaker_offset(rng: &mut ChaCha8Rng, dim: usize, separation: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    raw.iter().map(|v| v / norm * separation).collect()
}

fn shifted(base: &Hmm, offset: &[f64]) -> Hmm {
    let dim = base.dim();
    let states = (0..base.num_states())
        .map(|j| {
            let mut p = base.state_params(j);
            for chunk in p.means.chunks_mut(dim) {
                for (d, v) in chunk.iter_mut().enumerate() {
                    *v += offset[d];
                }
            }
            p
        })
        .collect();
    Hmm::new(
        dim,
        base.pi().to_vec(),
        base.transitions().to_vec(),
        states,
        base.var_floor().to_vec(),
        *base.frame_config(),
    )
    .expect("shifting means preserves validity")
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples `t_max` frames from a generator HMM.
pub fn sample_sequence(model: &Hmm, t_max: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
    let j = model.num_states();
    let dim = model.dim();
    let mut data = Vec::with_capacity(t_max * dim);
    let mut state = sample_index(model.pi(), rng);
    for t in 0..t_max {
        if t > 0 {
            state = sample_index(&model.transitions()[state * j..(state + 1) * j], rng);
        }
        let p = model.state_params(state);
        let m = sample_index(&p.weights, rng);
        for d in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(p.means[m * dim + d] + z * p.vars[m * dim + d].sqrt());
        }
    }
    FeatureSequence::new(
        dim,
        data,
        vec![SYNTH_LOG_ENERGY; t_max],
        *model.frame_config(),
    )
    .expect("sampled sequence is well-formed")
}

/// Generates the full corpus: per-speaker generators, role-tagged feature
/// sequences, and spliced multi-speaker streams with per-frame truth.
pub fn synth_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let frame = FrameConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = base_model(&mut rng, spec, frame);

    let speaker_ids: Vec<String> = (0..spec.speakers).map(|s| format!("spk{s:02}")).collect();
    let generators: Vec<Hmm> = (0..spec.speakers)
        .map(|_| shifted(&base, &speaker_offset(&mut rng, spec.dim, spec.separation)))
        .collect();

    let mut entries = Vec::new();
    for (s, speaker) in speaker_ids.iter().enumerate() {
        let plan = [
            (SynthRole::Train, spec.train_utts, spec.train_secs),
            (SynthRole::Enroll, spec.enroll_utts, spec.enroll_secs),
            (SynthRole::Test, spec.test_utts, spec.test_secs),
        ];
        for (role, count, secs) in plan {
            let t_max = secs_to_frames(secs, &frame);
            for i in 0..count {
                entries.push(SynthEntry {
                    id: format!("{speaker}-{}{i:02}", role.as_str()),
                    speaker: speaker.clone(),
                    role,
                    features: sample_sequence(&generators[s], t_max, &mut rng),
                });
            }
        }
    }

    let mut spliced = Vec::new();
    let seg_frames = secs_to_frames(spec.splice_segment_secs, &frame);
    for i in 0..spec.spliced_streams {
        let a = i % spec.speakers;
        let b = (i + 1) % spec.speakers;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for seg in 0..spec.splice_segments {
            let who = if seg % 2 == 0 { a } else { b };
            let piece = sample_sequence(&generators[who], seg_frames, &mut rng);
            data.extend_from_slice(piece.data());
            labels.extend(std::iter::repeat(who).take(seg_frames));
        }
        let frames = labels.len();
        spliced.push(SplicedStream {
            id: format!("stream{i:02}"),
            features: FeatureSequence::new(
                spec.dim,
                data,
                vec![SYNTH_LOG_ENERGY; frames],
                frame,
            )?,
            frame_speakers: labels,
        });
    }

    Ok(SynthCorpus {
        speaker_ids,
        generators,
        entries,
        spliced,
    })
}

/// Writes feature files, the tab-separated manifest, and per-frame truth
/// for the spliced streams. Returns the manifest path.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<PathBuf> {
    use std::io::Write;
    let feat_dir = dir.join("features");
    let stream_dir = dir.join("streams");
    std::fs::create_dir_all(&feat_dir)?;
    std::fs::create_dir_all(&stream_dir)?;

    let manifest_path = dir.join("manifest.tsv");
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(&manifest_path)?);
    for e in &corpus.entries {
        let rel = format!("features/{}.feat", e.id);
        e.features.save_dump(&dir.join(&rel))?;
        writeln!(
            manifest,
            "{}\t{}\t{}\t{}\tfeatures",
            e.id,
            rel,
            e.speaker,
            e.role.as_str()
        )?;
    }
    drop(manifest);

    for s in &corpus.spliced {
        s.features
            .save_dump(&stream_dir.join(format!("{}.feat", s.id)))?;
        let mut truth =
            std::io::BufWriter::new(std::fs::File::create(stream_dir.join(format!("{}.truth", s.id)))?);
        for &who in &s.frame_speakers {
            writeln!(truth, "{}", corpus.speaker_ids[who])?;
        }
    }
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            speakers: 3,
            states: 1,
            mixtures: 2,
            dim: 4,
            separation: 4.0,
            train_utts: 1,
            train_secs: 1.0,
            enroll_utts: 1,
            enroll_secs: 0.8,
            test_utts: 1,
            test_secs: 0.6,
            spliced_streams: 1,
            splice_segments: 3,
            splice_segment_secs: 0.5,
            seed: 777,
        }
    }

    #[test]
    fn corpus_has_the_requested_shape() {
        let corpus = synth_corpus(&tiny_spec()).unwrap();
        assert_eq!(corpus.speaker_ids.len(), 3);
        assert_eq!(corpus.entries.len(), 3 * 3);
        // 1.0 s at 10 ms shift.
        let train = corpus.features_for("spk00", SynthRole::Train);
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].len(), 100);
        assert_eq!(train[0].dim(), 4);
        let stream = &corpus.spliced[0];
        assert_eq!(stream.frame_speakers.len(), 150);
        assert_eq!(stream.features.len(), 150);
        // Change points where the label flips.
        assert_eq!(stream.frame_speakers[0], 0);
        assert_eq!(stream.frame_speakers[75], 1);
    }

    #[test]
    fn zero_separation_makes_identical_generators() {
        let spec = SynthSpec {
            separation: 0.0,
            ..tiny_spec()
        };
        let corpus = synth_corpus(&spec).unwrap();
        let a = corpus.generators[0].state_params(0);
        for g in &corpus.generators[1..] {
            assert_eq!(a, g.state_params(0));
        }
    }

    #[test]
    fn separation_sets_the_offset_norm() {
        let corpus = synth_corpus(&tiny_spec()).unwrap();
        let base_free: Vec<f64> = {
            // Offsets are identical across mixtures, so mixture-0 mean
            // difference between two speakers has norm <= 2 * separation
            // and each speaker offset norm is exactly `separation` relative
            // to the base; recover it from any two speakers' difference of
            // identical mixtures: ||v_a - v_b|| in [0, 2 sep].
            let pa = corpus.generators[0].state_params(0);
            let pb = corpus.generators[1].state_params(0);
            pa.means
                .iter()
                .zip(&pb.means)
                .take(4)
                .map(|(x, y)| x - y)
                .collect()
        };
        let norm = base_free.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0 && norm <= 2.0 * 4.0 + 1e-9);
    }

    #[test]
    fn same_seed_writes_byte_identical_corpora() {
        let spec = tiny_spec();
        let c1 = synth_corpus(&spec).unwrap();
        let c2 = synth_corpus(&spec).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = write_corpus(&c1, d1.path()).unwrap();
        let m2 = write_corpus(&c2, d2.path()).unwrap();
        assert_eq!(
            std::fs::read(&m1).unwrap(),
            std::fs::read(&m2).unwrap()
        );
        for e in &c1.entries {
            let rel = format!("features/{}.feat", e.id);
            assert_eq!(
                std::fs::read(d1.path().join(&rel)).unwrap(),
                std::fs::read(d2.path().join(&rel)).unwrap(),
                "{rel} differs between identically seeded runs"
            );
        }
    }

    #[test]
    fn feature_files_round_trip_through_the_dump_format() {
        let corpus = synth_corpus(&tiny_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let e = &corpus.entries[0];
        let back = FeatureSequence::load_dump(
            &dir.path().join(format!("features/{}.feat", e.id)),
            FrameConfig::default(),
        )
        .unwrap();
        assert_eq!(&back, &e.features);
    }
}
