//! Subcommand implementations: train-si, enroll, stream, evaluate, synth,
//! weer. Every command is deterministic under a fixed seed and fixed
//! inputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cli::config::RunConfig;
use crate::cli::manifest::{CorpusManifest, Role};
use crate::error::{Error, Result};
use crate::eval::{kfold_split, synth_corpus, weer, write_corpus, SynthSpec, Trial};
use crate::frontend::{compute_mfcc, read_wav, sliding_cmn, vad};
use crate::hmm::io::{load_model, save_model};
use crate::mve::pair_io::{fnv1a_hash, load_pair, save_pair, PairMetadata};
use crate::mve::TraceRow;
use crate::pipeline::{
    enroll_speaker, evaluate_speaker, run_experiment, train_si, EvalCorpus, LoadedEntry,
};
use crate::stream::authenticate_stream;

#[derive(Parser, Debug)]
#[command(
    name = "voiceauth",
    version,
    about = "Continuous voice authentication: train, register, stream, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command; flags override the config file.
#[derive(Args, Debug, Clone)]
pub struct CommonOpts {
    /// JSON run configuration (all fields optional).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Decision window length in frames.
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride in frames.
    #[arg(long)]
    pub stride: Option<usize>,
    /// HMM state count.
    #[arg(long)]
    pub states: Option<usize>,
    /// Mixtures per state.
    #[arg(long)]
    pub mixtures: Option<usize>,
    /// Training window-start decimation.
    #[arg(long)]
    pub train_stride: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CommonOpts {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.window {
            cfg.window.n_w = v;
        }
        if let Some(v) = self.stride {
            cfg.window.stride = v;
        }
        if let Some(v) = self.states {
            cfg.states = v;
        }
        if let Some(v) = self.mixtures {
            cfg.mixtures = v;
        }
        if let Some(v) = self.train_stride {
            cfg.train_stride = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the speaker-independent model on train-role utterances.
    TrainSi {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Output model file (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Training log path (default: the model path with a .log extension).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Register speakers: MAP adaptation, cohort selection, MVE training.
    Enroll {
        #[command(flatten)]
        common: CommonOpts,
        /// Trained SI model file.
        #[arg(long)]
        si: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Register only this speaker (default: everyone with enroll data).
        #[arg(long)]
        speaker: Option<String>,
        /// Directory for pair files and MVE traces.
        #[arg(long)]
        out_dir: PathBuf,
        /// Stop after MAP adaptation: pair = (MAP model, SI model).
        #[arg(long)]
        skip_mve: bool,
    },
    /// Score a WAV file against a registered pair, emitting the score CSV.
    Stream {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        pair: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the pair's calibrated threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Emit every Nth window (reporting can be coarser than testing).
        #[arg(long, default_value_t = 1)]
        report_every: usize,
    },
    /// Evaluate pairs (or run parameter sweeps / K-fold validation).
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of *.pair.json files to score.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// MAP-only pipeline in sweep/kfold modes.
        #[arg(long)]
        skip_mve: bool,
        /// Window-length sweep, e.g. 11,51,101,201,501.
        #[arg(long, value_delimiter = ',')]
        sweep_nw: Vec<usize>,
        /// Model-shape sweep as JxK entries, e.g. 1x128,8x16.
        #[arg(long, value_delimiter = ',')]
        sweep_model: Vec<String>,
        /// Enrollment-duration sweep in seconds, e.g. 105,180,240.
        #[arg(long, value_delimiter = ',')]
        sweep_enroll_secs: Vec<f64>,
        /// K-fold cross validation over enroll+test utterances.
        #[arg(long)]
        kfold: Option<usize>,
        /// Rounds of K-fold validation.
        #[arg(long, default_value_t = 1)]
        rounds: usize,
    },
    /// Generate a synthetic speaker corpus (features + manifest + truth).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        /// Inter-speaker distance in within-speaker sigma units.
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 1)]
        states: usize,
        #[arg(long, default_value_t = 4)]
        mixtures: usize,
        #[arg(long, default_value_t = 39)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        train_utts: usize,
        #[arg(long, default_value_t = 20.0)]
        train_secs: f64,
        #[arg(long, default_value_t = 3)]
        enroll_utts: usize,
        #[arg(long, default_value_t = 12.0)]
        enroll_secs: f64,
        #[arg(long, default_value_t = 2)]
        test_utts: usize,
        #[arg(long, default_value_t = 10.0)]
        test_secs: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Re-score an existing trial CSV (columns: score, is_target, optional vad).
    Weer {
        #[arg(long)]
        trials: PathBuf,
        /// Output prefix: writes PREFIX.sweep.csv and PREFIX.json.
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSi {
            common,
            manifest,
            out,
            log,
        } => cmd_train_si(&common, &manifest, &out, log.as_deref()),
        Command::Enroll {
            common,
            si,
            manifest,
            speaker,
            out_dir,
            skip_mve,
        } => cmd_enroll(&common, &si, &manifest, speaker.as_deref(), &out_dir, skip_mve),
        Command::Stream {
            common,
            pair,
            wav,
            out,
            threshold,
            report_every,
        } => cmd_stream(&common, &pair, &wav, &out, threshold, report_every),
        Command::Evaluate {
            common,
            manifest,
            pairs,
            out_dir,
            skip_mve,
            sweep_nw,
            sweep_model,
            sweep_enroll_secs,
            kfold,
            rounds,
        } => cmd_evaluate(
            &common,
            &manifest,
            pairs.as_deref(),
            &out_dir,
            skip_mve,
            &sweep_nw,
            &sweep_model,
            &sweep_enroll_secs,
            kfold,
            rounds,
        ),
        Command::Synth {
            out_dir,
            speakers,
            separation,
            states,
            mixtures,
            dim,
            train_utts,
            train_secs,
            enroll_utts,
            enroll_secs,
            test_utts,
            test_secs,
            seed,
        } => {
            let spec = SynthSpec {
                speakers,
                states,
                mixtures,
                dim,
                separation,
                train_utts,
                train_secs,
                enroll_utts,
                enroll_secs,
                test_utts,
                test_secs,
                seed,
                ..SynthSpec::default()
            };
            let corpus = synth_corpus(&spec)?;
            std::fs::create_dir_all(&out_dir)?;
            let manifest = write_corpus(&corpus, &out_dir)?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
        Command::Weer { trials, out_prefix } => cmd_weer(&trials, &out_prefix),
    }
}

fn cmd_train_si(
    common: &CommonOpts,
    manifest_path: &Path,
    out: &Path,
    log: Option<&Path>,
) -> Result<()> {
    let cfg = common.resolve()?;
    let manifest = CorpusManifest::load(manifest_path)?;
    let corpus = EvalCorpus::from_manifest(&manifest, &cfg)?;
    let pooled = corpus.pooled_train();
    if pooled.is_empty() {
        return Err(Error::Manifest("manifest has no train-role entries".into()));
    }
    let (model, trace) = train_si(&pooled, &cfg)?;
    save_model(out, &model)?;
    let log_path = log
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| out.with_extension("log"));
    let mut f = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(f, "iteration\tmean_window_loglik")?;
    for (i, ll) in trace.iter().enumerate() {
        writeln!(f, "{i}\t{ll}")?;
    }
    println!(
        "trained SI model: {} states x {} mixtures on {} utterances -> {}",
        cfg.states,
        cfg.mixtures,
        pooled.len(),
        out.display()
    );
    Ok(())
}

fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,loss,empirical_wmde,empirical_wfae,step_size")?;
    for row in trace {
        writeln!(
            f,
            "{},{},{},{},{}",
            row.epoch, row.loss, row.empirical_wmde, row.empirical_wfae, row.step_size
        )?;
    }
    Ok(())
}

fn cmd_enroll(
    common: &CommonOpts,
    si_path: &Path,
    manifest_path: &Path,
    speaker: Option<&str>,
    out_dir: &Path,
    skip_mve: bool,
) -> Result<()> {
    let cfg = common.resolve()?;
    let manifest = CorpusManifest::load(manifest_path)?;
    let corpus = EvalCorpus::from_manifest(&manifest, &cfg)?;
    let si = load_model(si_path)?;
    let si_hash = fnv1a_hash(&std::fs::read(si_path)?);
    std::fs::create_dir_all(out_dir)?;

    let speakers: Vec<String> = match speaker {
        Some(s) => {
            if !corpus.enroll.contains_key(s) {
                return Err(Error::InvalidArgument(format!(
                    "speaker {s:?} has no enroll-role entries"
                )));
            }
            vec![s.to_string()]
        }
        None => corpus.enroll.keys().cloned().collect(),
    };

    for s in &speakers {
        let impostors: Vec<_> = corpus
            .train
            .iter()
            .filter(|(other, _)| *other != s)
            .flat_map(|(_, utts)| utts.iter().cloned())
            .collect();
        let result = enroll_speaker(&si, &corpus.enroll[s], &impostors, &cfg, skip_mve)?;
        let pair_path = out_dir.join(format!("{s}.pair.json"));
        let metadata = PairMetadata {
            si_model_hash: si_hash.clone(),
            map_config: cfg.map,
            mve_trained: !skip_mve,
        };
        save_pair(&pair_path, &result.pair, &metadata)?;
        if !result.trace.is_empty() {
            write_trace_csv(&out_dir.join(format!("{s}.mve.csv")), &result.trace)?;
        }
        println!(
            "enrolled {s}: target_tokens={} cohort_size={} threshold={} -> {}",
            result.target_tokens,
            result.cohort_size,
            result.pair.threshold,
            pair_path.display()
        );
    }
    Ok(())
}

fn cmd_stream(
    common: &CommonOpts,
    pair_path: &Path,
    wav_path: &Path,
    out: &Path,
    threshold: Option<f64>,
    report_every: usize,
) -> Result<()> {
    let cfg = common.resolve()?;
    let (pair, _) = load_pair(pair_path)?;
    let audio = read_wav(wav_path)?;
    if audio.sample_rate != cfg.sample_rate {
        eprintln!(
            "warning: {} has sample rate {} Hz, configured {} Hz (no resampling)",
            wav_path.display(),
            audio.sample_rate,
            cfg.sample_rate
        );
    }
    let features = compute_mfcc(&audio, &cfg.frame)?;
    let mask = vad(&features, cfg.vad_neighborhood, cfg.vad_offset_db);
    let features = sliding_cmn(&features, cfg.window.n_w)?;
    let theta = threshold.unwrap_or(pair.threshold);
    let stream = authenticate_stream(&pair, &features, &mask, &cfg.window, theta)?;
    let emitted = stream.decimated(report_every);
    emitted.write_csv(out)?;
    let speech = emitted
        .entries()
        .iter()
        .filter(|e| e.vad_speech)
        .count();
    match emitted.accept_fraction() {
        Some(frac) => println!(
            "windows={} speech_windows={speech} accept_fraction={frac}",
            emitted.len()
        ),
        None => println!("windows={} speech_windows=0 accept_fraction=nan", emitted.len()),
    }
    Ok(())
}

fn parse_model_shape(s: &str) -> Result<(usize, usize)> {
    let (j, k) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::InvalidArgument(format!("model shape {s:?}, expected JxK")))?;
    Ok((
        j.trim()
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("model shape {s:?}: {e}")))?,
        k.trim()
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("model shape {s:?}: {e}")))?,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    common: &CommonOpts,
    manifest_path: &Path,
    pairs_dir: Option<&Path>,
    out_dir: &Path,
    skip_mve: bool,
    sweep_nw: &[usize],
    sweep_model: &[String],
    sweep_enroll_secs: &[f64],
    kfold: Option<usize>,
    rounds: usize,
) -> Result<()> {
    let cfg = common.resolve()?;
    let manifest = CorpusManifest::load(manifest_path)?;
    std::fs::create_dir_all(out_dir)?;

    if let Some(k) = kfold {
        return evaluate_kfold(&cfg, &manifest, out_dir, skip_mve, k, rounds);
    }
    if !sweep_nw.is_empty() {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep_nw.csv"))?);
        writeln!(f, "n_w,latency_s,average_weer_percent")?;
        for &n_w in sweep_nw {
            let mut c = cfg.clone();
            c.window.n_w = n_w;
            c.validate()?;
            let corpus = EvalCorpus::from_manifest(&manifest, &c)?;
            let result = run_experiment(&corpus, &c, skip_mve)?;
            let latency = c.window.signal_duration_s(&c.frame);
            writeln!(f, "{n_w},{latency},{}", result.average_weer)?;
            println!("n_w={n_w}: average WEER {:.3}%", result.average_weer);
        }
        return Ok(());
    }
    if !sweep_model.is_empty() {
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep_model.csv"))?);
        writeln!(f, "states,mixtures,average_weer_percent")?;
        for shape in sweep_model {
            let (states, mixtures) = parse_model_shape(shape)?;
            let mut c = cfg.clone();
            c.states = states;
            c.mixtures = mixtures;
            c.validate()?;
            let corpus = EvalCorpus::from_manifest(&manifest, &c)?;
            let result = run_experiment(&corpus, &c, skip_mve)?;
            writeln!(f, "{states},{mixtures},{}", result.average_weer)?;
            println!("{states}x{mixtures}: average WEER {:.3}%", result.average_weer);
        }
        return Ok(());
    }
    if !sweep_enroll_secs.is_empty() {
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep_enroll.csv"))?);
        writeln!(f, "enroll_secs,average_weer_percent")?;
        for &secs in sweep_enroll_secs {
            let mut corpus = EvalCorpus::from_manifest(&manifest, &cfg)?;
            corpus.truncate_enrollment(secs, &cfg)?;
            let result = run_experiment(&corpus, &cfg, skip_mve)?;
            writeln!(f, "{secs},{}", result.average_weer)?;
            println!("enroll {secs}s: average WEER {:.3}%", result.average_weer);
        }
        return Ok(());
    }

    // Plain mode: score existing pair files against the test role.
    let pairs_dir = pairs_dir.ok_or_else(|| {
        Error::InvalidArgument("evaluate needs --pairs <dir> or a sweep/kfold flag".into())
    })?;
    let corpus = EvalCorpus::from_manifest(&manifest, &cfg)?;
    let mut names: Vec<PathBuf> = std::fs::read_dir(pairs_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".pair.json"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no *.pair.json files in {}",
            pairs_dir.display()
        )));
    }
    let mut aggregate = BTreeMap::new();
    for path in &names {
        let speaker = path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .trim_end_matches(".pair.json")
            .to_string();
        let (pair, _) = load_pair(path)?;
        let report = evaluate_speaker(&speaker, &pair, &corpus.test, &cfg)?;
        report.write_sweep_csv(&out_dir.join(format!("{speaker}.sweep.csv")))?;
        report.write_summary_json(&out_dir.join(format!("{speaker}.summary.json")))?;
        println!("{speaker}: WEER {:.3}% at threshold {}", report.weer, report.weer_threshold);
        aggregate.insert(speaker, report.weer);
    }
    let average = aggregate.values().sum::<f64>() / aggregate.len() as f64;
    #[derive(serde::Serialize)]
    struct Aggregate {
        average_weer_percent: f64,
        per_speaker_weer_percent: BTreeMap<String, f64>,
    }
    let mut text = serde_json::to_string_pretty(&Aggregate {
        average_weer_percent: average,
        per_speaker_weer_percent: aggregate,
    })?;
    text.push('\n');
    std::fs::write(out_dir.join("aggregate.json"), text)?;
    println!("average WEER {average:.3}%");
    Ok(())
}

fn evaluate_kfold(
    cfg: &RunConfig,
    manifest: &CorpusManifest,
    out_dir: &Path,
    skip_mve: bool,
    k: usize,
    rounds: usize,
) -> Result<()> {
    // Pool each speaker's enroll+test utterances; train role stays fixed.
    let mut by_speaker: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut loaded: BTreeMap<String, (String, LoadedEntry)> = BTreeMap::new();
    for entry in manifest.entries() {
        if entry.role == Role::Train {
            continue;
        }
        let data = crate::pipeline::load_entry(entry, manifest.base_dir(), cfg)?;
        by_speaker
            .entry(entry.speaker.clone())
            .or_default()
            .push(entry.id.clone());
        loaded.insert(entry.id.clone(), (entry.speaker.clone(), data));
    }
    let base = EvalCorpus::from_manifest(manifest, cfg)?;

    let mut run_weers = Vec::new();
    for round in 0..rounds {
        let folds = kfold_split(&by_speaker, k, cfg.seed.wrapping_add(round as u64))?;
        for fold in &folds {
            let mut corpus = EvalCorpus {
                speakers: base.speakers.clone(),
                train: base.train.clone(),
                ..Default::default()
            };
            for id in &fold.enroll {
                let (speaker, data) = &loaded[id];
                corpus
                    .enroll
                    .entry(speaker.clone())
                    .or_default()
                    .push(data.features.clone());
            }
            for id in &fold.test {
                let (speaker, data) = &loaded[id];
                corpus.test.entry(speaker.clone()).or_default().push(data.clone());
            }
            let result = run_experiment(&corpus, cfg, skip_mve)?;
            run_weers.push(result.average_weer);
        }
    }
    let n = run_weers.len() as f64;
    let mean = run_weers.iter().sum::<f64>() / n;
    let std = (run_weers.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (n - 1.0).max(1.0))
        .sqrt();
    // Normal-approximation 95% confidence range over runs.
    let cr = 1.96 * std / n.sqrt();
    #[derive(serde::Serialize)]
    struct KfoldOut {
        k: usize,
        rounds: usize,
        runs: Vec<f64>,
        mean_weer_percent: f64,
        confidence_range_95: f64,
    }
    let mut text = serde_json::to_string_pretty(&KfoldOut {
        k,
        rounds,
        runs: run_weers,
        mean_weer_percent: mean,
        confidence_range_95: cr,
    })?;
    text.push('\n');
    std::fs::write(out_dir.join("kfold.json"), text)?;
    println!("{k}-fold x {rounds} rounds: WEER {mean:.3}% +/- {cr:.3}%");
    Ok(())
}

fn cmd_weer(trials_path: &Path, out_prefix: &Path) -> Result<()> {
    let text = std::fs::read_to_string(trials_path)?;
    let mut trials = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if ln == 0 && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() < 2 {
            return Err(Error::Format(format!(
                "{}: line {}: need score,is_target[,vad]",
                trials_path.display(),
                ln + 1
            )));
        }
        let parse_flag = |s: &str| matches!(s.trim(), "1" | "true" | "target");
        trials.push(Trial {
            score: fields[0].trim().parse().map_err(|e| {
                Error::Format(format!("{}: line {}: {e}", trials_path.display(), ln + 1))
            })?,
            is_target: parse_flag(fields[1]),
            vad_speech: fields.get(2).map_or(true, |s| parse_flag(s)),
        });
    }
    let report = weer(&trials)?;
    let sweep = out_prefix.with_extension("sweep.csv");
    let summary = out_prefix.with_extension("json");
    report.write_sweep_csv(&sweep)?;
    report.write_summary_json(&summary)?;
    println!(
        "weer={}% threshold={} targets={} impostors={} abstained={}",
        report.weer,
        report.weer_threshold,
        report.target_count,
        report.impostor_count,
        report.abstained_count
    );
    Ok(())
}
