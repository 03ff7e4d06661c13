//! Window-based evaluation: WMDE/WFAE sweep, WEER with linear
//! interpolation at the crossing, majority voting, K-fold splitting and the
//! synthetic corpus generator used for desk-scale end-to-end checks.

mod kfold;
mod synth;
mod vote;

pub use kfold::{kfold_split, Fold};
pub use synth::{
    sample_sequence, synth_corpus, write_corpus, SplicedStream, SynthCorpus, SynthEntry,
    SynthRole, SynthSpec,
};
pub use vote::{utterance_vote, VoteOutcome};

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One scored verification trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub score: f64,
    pub is_target: bool,
    /// Anchor-frame VAD flag; silent trials are excluded from the metric.
    pub vad_speech: bool,
}

/// One operating point of the threshold sweep. Rates are fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub wmde: f64,
    pub wfae: f64,
}

/// WEER evaluation output. `weer` is a percentage.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sweep: Vec<SweepPoint>,
    pub weer: f64,
    pub weer_threshold: f64,
    pub target_count: usize,
    pub impostor_count: usize,
    pub abstained_count: usize,
}

impl EvalReport {
    /// Writes the sweep as CSV: theta, wmde, wfae.
    pub fn write_sweep_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "theta,wmde,wfae")?;
        for p in &self.sweep {
            writeln!(out, "{},{},{}", p.theta, p.wmde, p.wfae)?;
        }
        Ok(())
    }

    /// Writes the JSON summary (weer, threshold, counts).
    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary {
            weer_percent: f64,
            threshold: f64,
            target_windows: usize,
            impostor_windows: usize,
            abstained_windows: usize,
        }
        let s = Summary {
            weer_percent: self.weer,
            threshold: self.weer_threshold,
            target_windows: self.target_count,
            impostor_windows: self.impostor_count,
            abstained_windows: self.abstained_count,
        };
        let mut text = serde_json::to_string_pretty(&s)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Window-based equal error rate.
///
/// Abstained (silent-anchor) trials are excluded. The threshold sweeps the
/// sorted unique scores (decision: accept iff score >= theta, so WMDE is
/// non-decreasing and WFAE non-increasing), and the WEER is the crossing of
/// the two rate curves with linear interpolation between the two adjacent
/// sweep points straddling it.
pub fn weer(trials: &[Trial]) -> Result<EvalReport> {
    let abstained_count = trials.iter().filter(|t| !t.vad_speech).count();
    let speech: Vec<&Trial> = trials.iter().filter(|t| t.vad_speech).collect();
    if speech.iter().any(|t| !t.score.is_finite()) {
        return Err(Error::Numerical("non-finite trial score".into()));
    }
    let mut targets: Vec<f64> = speech.iter().filter(|t| t.is_target).map(|t| t.score).collect();
    let mut impostors: Vec<f64> =
        speech.iter().filter(|t| !t.is_target).map(|t| t.score).collect();
    if targets.is_empty() || impostors.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "need both trial classes, got {} target / {} impostor speech trials",
            targets.len(),
            impostors.len()
        )));
    }
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    impostors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_t = targets.len() as f64;
    let n_i = impostors.len() as f64;

    let mut thetas: Vec<f64> = speech.iter().map(|t| t.score).collect();
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup();
    // Sentinel above every score: reject-all.
    thetas.push(thetas.last().unwrap() + 1.0);

    let sweep: Vec<SweepPoint> = thetas
        .iter()
        .map(|&theta| {
            // Misses: targets strictly below theta (accept iff score >= theta).
            let miss = targets.partition_point(|&s| s < theta) as f64;
            let fa = n_i - impostors.partition_point(|&s| s < theta) as f64;
            SweepPoint {
                theta,
                wmde: miss / n_t,
                wfae: fa / n_i,
            }
        })
        .collect();

    // First point where the difference turns non-negative.
    let cross = sweep
        .iter()
        .position(|p| p.wmde - p.wfae >= 0.0)
        .expect("reject-all sentinel guarantees a crossing");
    let (weer_frac, threshold) = if cross == 0 {
        (sweep[0].wmde.max(sweep[0].wfae), sweep[0].theta)
    } else {
        let a = &sweep[cross - 1];
        let b = &sweep[cross];
        let d_a = a.wmde - a.wfae;
        let d_b = b.wmde - b.wfae;
        let lambda = if d_b - d_a > 0.0 { -d_a / (d_b - d_a) } else { 1.0 };
        (
            a.wmde + lambda * (b.wmde - a.wmde),
            a.theta + lambda * (b.theta - a.theta),
        )
    };

    Ok(EvalReport {
        sweep,
        weer: 100.0 * weer_frac,
        weer_threshold: threshold,
        target_count: targets.len(),
        impostor_count: impostors.len(),
        abstained_count,
    })
}
