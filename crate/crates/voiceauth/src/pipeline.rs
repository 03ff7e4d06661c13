//! Shared orchestration: the train / register / evaluate workflows used by
//! both the CLI commands and the end-to-end test suites.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::cli::config::RunConfig;
use crate::cli::manifest::{CorpusManifest, FileFormat, ManifestEntry, Role};
use crate::error::{Error, Result};
use crate::eval::{weer, EvalReport, SynthCorpus, SynthRole, Trial};
use crate::frontend::{compute_mfcc, read_wav, sliding_cmn, vad, FeatureSequence, VadMask};
use crate::hmm::{baum_welch_short, kmeans_init, Hmm};
use crate::mve::{
    cohort_select, gpd_train, score_tokens, tokens_from_corpus, SpeakerModelPair, TokenClass,
    TraceRow, WindowToken,
};
use crate::stream::authenticate_stream;

/// One loaded utterance: features ready for modeling plus its VAD mask.
#[derive(Debug, Clone)]
pub struct LoadedEntry {
    pub features: FeatureSequence,
    pub mask: VadMask,
}

/// Loads one manifest entry. WAV input goes through the full front-end
/// (MFCC, VAD, then per-frame moving CMS matched to the decision window);
/// feature-format input bypasses the DSP front-end entirely and counts as
/// pre-cleaned speech.
pub fn load_entry(entry: &ManifestEntry, base: &Path, cfg: &RunConfig) -> Result<LoadedEntry> {
    let path = entry.resolved_path(base);
    match entry.format {
        FileFormat::Wav => {
            let audio = read_wav(&path)?;
            if audio.sample_rate != cfg.sample_rate {
                eprintln!(
                    "warning: {} has sample rate {} Hz, configured {} Hz (no resampling)",
                    path.display(),
                    audio.sample_rate,
                    cfg.sample_rate
                );
            }
            let features = compute_mfcc(&audio, &cfg.frame)?;
            let mask = vad(&features, cfg.vad_neighborhood, cfg.vad_offset_db);
            let features = sliding_cmn(&features, cfg.window.n_w)?;
            Ok(LoadedEntry { features, mask })
        }
        FileFormat::Features => {
            let features = FeatureSequence::load_dump(&path, cfg.frame)?;
            let mask = VadMask::all_speech(features.len());
            Ok(LoadedEntry { features, mask })
        }
    }
}

/// Role-partitioned corpus in memory.
#[derive(Debug, Clone, Default)]
pub struct EvalCorpus {
    pub speakers: Vec<String>,
    pub train: BTreeMap<String, Vec<FeatureSequence>>,
    pub enroll: BTreeMap<String, Vec<FeatureSequence>>,
    pub test: BTreeMap<String, Vec<LoadedEntry>>,
}

impl EvalCorpus {
    pub fn from_manifest(manifest: &CorpusManifest, cfg: &RunConfig) -> Result<Self> {
        let mut corpus = EvalCorpus {
            speakers: manifest.speakers(),
            ..Default::default()
        };
        let loaded: Vec<LoadedEntry> = manifest
            .entries()
            .par_iter()
            .map(|e| load_entry(e, manifest.base_dir(), cfg))
            .collect::<Result<_>>()?;
        for (entry, data) in manifest.entries().iter().zip(loaded) {
            match entry.role {
                Role::Train => corpus
                    .train
                    .entry(entry.speaker.clone())
                    .or_default()
                    .push(data.features),
                Role::Enroll => corpus
                    .enroll
                    .entry(entry.speaker.clone())
                    .or_default()
                    .push(data.features),
                Role::Test => corpus
                    .test
                    .entry(entry.speaker.clone())
                    .or_default()
                    .push(data),
            }
        }
        Ok(corpus)
    }

    pub fn from_synth(synth: &SynthCorpus) -> Self {
        let mut corpus = EvalCorpus {
            speakers: synth.speaker_ids.clone(),
            ..Default::default()
        };
        for e in &synth.entries {
            match e.role {
                SynthRole::Train => corpus
                    .train
                    .entry(e.speaker.clone())
                    .or_default()
                    .push(e.features.clone()),
                SynthRole::Enroll => corpus
                    .enroll
                    .entry(e.speaker.clone())
                    .or_default()
                    .push(e.features.clone()),
                SynthRole::Test => corpus.test.entry(e.speaker.clone()).or_default().push(
                    LoadedEntry {
                        mask: VadMask::all_speech(e.features.len()),
                        features: e.features.clone(),
                    },
                ),
            }
        }
        corpus
    }

    /// Pooled training material, in stable speaker order.
    pub fn pooled_train(&self) -> Vec<FeatureSequence> {
        self.train.values().flatten().cloned().collect()
    }

    /// Caps each speaker's total enrollment at `secs` seconds (keeps whole
    /// leading utterances, truncates the one crossing the budget).
    pub fn truncate_enrollment(&mut self, secs: f64, cfg: &RunConfig) -> Result<()> {
        let budget = (secs / cfg.frame.shift_s).round() as usize;
        for utts in self.enroll.values_mut() {
            let mut remaining = budget;
            let mut kept = Vec::new();
            for utt in utts.iter() {
                if remaining == 0 {
                    break;
                }
                if utt.len() <= remaining {
                    remaining -= utt.len();
                    kept.push(utt.clone());
                } else {
                    if remaining >= cfg.window.n_w {
                        kept.push(utt.slice(0, remaining)?);
                    }
                    remaining = 0;
                }
            }
            *utts = kept;
        }
        Ok(())
    }
}

/// Trains the speaker-independent model: K-means initialization followed by
/// short-time Baum-Welch. Returns the model and the per-iteration mean
/// window log-likelihood trace.
pub fn train_si(train: &[FeatureSequence], cfg: &RunConfig) -> Result<(Hmm, Vec<f64>)> {
    cfg.validate()?;
    let init = kmeans_init(train, cfg.states, cfg.mixtures, cfg.seed)?;
    baum_welch_short(&init, train, &cfg.train_window(), cfg.si_iterations)
}

/// Full registration output for one speaker.
#[derive(Debug, Clone)]
pub struct EnrollResult {
    pub pair: SpeakerModelPair,
    pub trace: Vec<TraceRow>,
    pub target_tokens: usize,
    pub cohort_size: usize,
}

/// Registers a speaker: MAP adaptation, cohort selection (r = target token
/// count), optional MVE training, and threshold calibration at the WEER
/// point of the enrollment + cohort scores.
pub fn enroll_speaker(
    si: &Hmm,
    enroll: &[FeatureSequence],
    impostors: &[FeatureSequence],
    cfg: &RunConfig,
    skip_mve: bool,
) -> Result<EnrollResult> {
    if enroll.is_empty() {
        return Err(Error::InvalidArgument("speaker has no enrollment data".into()));
    }
    let train_window = cfg.train_window();
    let sa = crate::adapt::map_adapt(si, enroll, &train_window, &cfg.map)?;
    let base = SpeakerModelPair::new(sa, si.clone(), 0.0)?;

    let mut combined: Vec<FeatureSequence> = enroll.to_vec();
    combined.extend(impostors.iter().cloned());
    let targets = tokens_from_corpus(&combined[..enroll.len()], &train_window, TokenClass::Target);
    let impostor_tokens: Vec<WindowToken> =
        tokens_from_corpus(&combined[enroll.len()..], &train_window, TokenClass::Impostor)
            .into_iter()
            .map(|mut t| {
                t.utterance += enroll.len();
                t
            })
            .collect();
    if targets.is_empty() {
        return Err(Error::InsufficientData(
            "enrollment yields no window tokens".into(),
        ));
    }
    let cohort = cohort_select(&base, &combined, &impostor_tokens, targets.len())?;

    let (mut pair, trace) = if skip_mve {
        (base, Vec::new())
    } else {
        gpd_train(&base, &combined, &targets, &cohort, &cfg.mve, cfg.seed)?
    };

    // Threshold calibration on enrollment + cohort scores.
    let all: Vec<WindowToken> = targets.iter().chain(&cohort).copied().collect();
    let scores = score_tokens(&pair, &combined, &all)?;
    let trials: Vec<Trial> = all
        .iter()
        .zip(&scores)
        .map(|(t, &(g0, g1))| Trial {
            score: g0 - g1,
            is_target: t.class == TokenClass::Target,
            vad_speech: true,
        })
        .collect();
    let report = weer(&trials)?;
    pair.threshold = report.weer_threshold;

    Ok(EnrollResult {
        pair,
        trace,
        target_tokens: targets.len(),
        cohort_size: cohort.len(),
    })
}

/// Scores one registered speaker against every speaker's test utterances:
/// the speaker's own windows are target trials, everyone else's are
/// impostor trials.
pub fn evaluate_speaker(
    speaker: &str,
    pair: &SpeakerModelPair,
    test: &BTreeMap<String, Vec<LoadedEntry>>,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let mut trials = Vec::new();
    for (other, utts) in test {
        let is_target = other == speaker;
        for entry in utts {
            let stream = authenticate_stream(
                pair,
                &entry.features,
                &entry.mask,
                &cfg.window,
                pair.threshold,
            )?;
            trials.extend(stream.entries().iter().map(|e| Trial {
                score: e.llr,
                is_target,
                vad_speech: e.vad_speech,
            }));
        }
    }
    weer(&trials)
}

/// A complete train / register / evaluate run.
#[derive(Debug)]
pub struct ExperimentResult {
    pub si: Hmm,
    pub si_trace: Vec<f64>,
    pub enrollments: BTreeMap<String, EnrollResult>,
    pub reports: BTreeMap<String, EvalReport>,
    pub average_weer: f64,
}

/// Runs the whole workflow on an in-memory corpus: SI training on the
/// pooled train role, per-speaker registration (impostor data = other
/// speakers' train material), then window-level evaluation over every
/// (speaker pair x test utterance) combination.
pub fn run_experiment(
    corpus: &EvalCorpus,
    cfg: &RunConfig,
    skip_mve: bool,
) -> Result<ExperimentResult> {
    let pooled = corpus.pooled_train();
    let (si, si_trace) = train_si(&pooled, cfg)?;

    let speakers: Vec<&String> = corpus.enroll.keys().collect();
    let enrollments: Vec<(String, EnrollResult)> = speakers
        .par_iter()
        .map(|speaker| {
            let enroll = &corpus.enroll[*speaker];
            let impostors: Vec<FeatureSequence> = corpus
                .train
                .iter()
                .filter(|(s, _)| s != speaker)
                .flat_map(|(_, utts)| utts.iter().cloned())
                .collect();
            enroll_speaker(&si, enroll, &impostors, cfg, skip_mve)
                .map(|r| ((*speaker).clone(), r))
        })
        .collect::<Result<_>>()?;
    let enrollments: BTreeMap<String, EnrollResult> = enrollments.into_iter().collect();

    let reports: Vec<(String, EvalReport)> = enrollments
        .par_iter()
        .map(|(speaker, enrollment)| {
            evaluate_speaker(speaker, &enrollment.pair, &corpus.test, cfg)
                .map(|r| (speaker.clone(), r))
        })
        .collect::<Result<_>>()?;
    let reports: BTreeMap<String, EvalReport> = reports.into_iter().collect();
    let average_weer =
        reports.values().map(|r| r.weer).sum::<f64>() / reports.len().max(1) as f64;

    Ok(ExperimentResult {
        si,
        si_trace,
        enrollments,
        reports,
        average_weer,
    })
}
