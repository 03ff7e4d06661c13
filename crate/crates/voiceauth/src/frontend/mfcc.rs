//! 39-dimensional MFCC extraction.
//!
//! Recipe (constants frozen so feature dumps stay stable): pre-emphasis
//! 0.97, Hamming window, power spectrum, 23 triangular mel filters spanning
//! 0..Nyquist, log with a 1e-10 floor, orthonormal DCT-II keeping c0..c12,
//! then delta and delta-delta by +/-2-frame regression with clamped edges.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frontend::{
    AudioSignal, FeatureSequence, FrameConfig, DELTA_WINDOW, ENERGY_FLOOR, FEATURE_DIM,
    NUM_CEPSTRA, NUM_MEL_FILTERS, PRE_EMPHASIS,
};

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// (left, center, right) frequencies in Hz of each triangular filter.
pub fn mel_filter_edges(sample_rate: u32) -> Vec<(f64, f64, f64)> {
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0);
    let step = (mel_hi - mel_lo) / (NUM_MEL_FILTERS + 1) as f64;
    (0..NUM_MEL_FILTERS)
        .map(|m| {
            (
                mel_to_hz(mel_lo + step * m as f64),
                mel_to_hz(mel_lo + step * (m + 1) as f64),
                mel_to_hz(mel_lo + step * (m + 2) as f64),
            )
        })
        .collect()
}

/// Filter weights per FFT bin (bins 0..=fft_size/2), continuous-frequency
/// triangles so no filter is ever empty.
pub fn mel_filterbank(sample_rate: u32, fft_size: usize) -> Vec<Vec<f64>> {
    let edges = mel_filter_edges(sample_rate);
    let n_bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    edges
        .iter()
        .map(|&(l, c, r)| {
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - l) / (c - l);
                    let falling = (r - f) / (r - c);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

fn dct_ii_ortho(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|q| {
            let scale = if q == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| x * (PI * q as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

fn regression_deltas(stat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t_max = stat.len();
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    (0..t_max)
        .map(|t| {
            let mut d = vec![0.0; stat[0].len()];
            for n in 1..=DELTA_WINDOW {
                let fwd = (t + n).min(t_max - 1);
                let bwd = t.saturating_sub(n);
                for (c, dv) in d.iter_mut().enumerate() {
                    *dv += n as f64 * (stat[fwd][c] - stat[bwd][c]);
                }
            }
            d.iter_mut().for_each(|v| *v /= denom);
            d
        })
        .collect()
}

/// Converts audio to a 39-dim MFCC sequence with per-frame log mel energy.
///
/// Frame count is exactly `1 + floor((len - frame_len) / shift)`.
pub fn compute_mfcc(audio: &AudioSignal, cfg: &FrameConfig) -> Result<FeatureSequence> {
    cfg.validate()?;
    let sr = audio.sample_rate;
    let frame_len = cfg.frame_len(sr);
    let shift = cfg.frame_shift(sr);
    if audio.samples.len() < frame_len {
        return Err(Error::EmptyInput(format!(
            "{} samples but one frame needs {frame_len}",
            audio.samples.len()
        )));
    }
    let t_frames = 1 + (audio.samples.len() - frame_len) / shift;

    // Normalize and pre-emphasize the whole signal once.
    let mut signal: Vec<f64> = audio.samples.iter().map(|&s| s as f64 / 32768.0).collect();
    for i in (1..signal.len()).rev() {
        signal[i] -= PRE_EMPHASIS * signal[i - 1];
    }

    let fft_size = frame_len.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let hamming: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
        .collect();
    let filterbank = mel_filterbank(sr, fft_size);

    let mut statics = Vec::with_capacity(t_frames);
    let mut log_energy = Vec::with_capacity(t_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for t in 0..t_frames {
        let start = t * shift;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < frame_len {
                Complex::new(signal[start + i] * hamming[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect();

        let mel: Vec<f64> = filterbank
            .iter()
            .map(|filt| filt.iter().zip(&power).map(|(w, p)| w * p).sum())
            .collect();
        let log_mel: Vec<f64> = mel.iter().map(|&e| e.max(ENERGY_FLOOR).ln()).collect();
        log_energy.push(mel.iter().sum::<f64>().max(ENERGY_FLOOR).ln());
        statics.push(dct_ii_ortho(&log_mel, NUM_CEPSTRA));
    }

    let delta = regression_deltas(&statics);
    let delta2 = regression_deltas(&delta);
    let mut data = Vec::with_capacity(t_frames * FEATURE_DIM);
    for t in 0..t_frames {
        data.extend_from_slice(&statics[t]);
        data.extend_from_slice(&delta[t]);
        data.extend_from_slice(&delta2[t]);
    }
    FeatureSequence::new(FEATURE_DIM, data, log_energy, *cfg)
}
