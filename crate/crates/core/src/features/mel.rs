//! Log-mel audio statistics.
//!
//! Stand-in for a pretrained audio embedder: per segment we take an STFT
//! (Hann window), project magnitudes through a triangular mel filterbank,
//! apply `log(x + floor)` and summarize each mel band by its mean and
//! standard deviation over the segment's STFT frames. With the default 64
//! bands this yields 128-dimensional rows.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, FeatureError, FeatureSource};
use crate::media_io::AudioTrack;
use crate::segmentation::SegmentGrid;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    /// Upper band edge in Hz; `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            frame_ms: 25.0,
            hop_ms: 10.0,
            fmin: 50.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Band edges: n_mels + 2 frequencies equally spaced on the mel scale.
fn band_edges(cfg: &MelConfig, fmax: f64) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(fmax);
    (0..cfg.n_mels + 2)
        .map(|k| mel_to_hz(lo + (hi - lo) * k as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Unit-peak triangular filterbank over `n_bins` FFT bins.
fn filterbank(cfg: &MelConfig, fmax: f64, n_bins: usize, bin_hz: f64) -> Vec<Vec<f64>> {
    let edges = band_edges(cfg, fmax);
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    let rising = (f - lo) / (mid - lo);
                    let falling = (hi - f) / (hi - mid);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

fn validate(cfg: &MelConfig, sample_rate: u32) -> Result<f64, FeatureError> {
    let nyquist = sample_rate as f64 / 2.0;
    let fmax = cfg.fmax.unwrap_or(nyquist);
    if cfg.n_mels < 8 {
        return Err(FeatureError::ConfigInvalid(format!(
            "n_mels must be >= 8, got {}",
            cfg.n_mels
        )));
    }
    if !(cfg.fmin > 0.0 && cfg.fmin < fmax && fmax <= nyquist) {
        return Err(FeatureError::ConfigInvalid(format!(
            "need 0 < fmin < fmax <= {nyquist}, got fmin={} fmax={fmax}",
            cfg.fmin
        )));
    }
    if cfg.frame_ms <= 0.0 || cfg.hop_ms <= 0.0 || cfg.log_floor <= 0.0 {
        return Err(FeatureError::ConfigInvalid(
            "frame_ms, hop_ms and log_floor must be positive".into(),
        ));
    }
    Ok(fmax)
}

/// Log-mel mean/std features for each segment of `grid`, so `d = 2 * n_mels`.
pub fn logmel_segment_features(
    audio: &AudioTrack,
    grid: &SegmentGrid,
    cfg: &MelConfig,
) -> Result<EmbeddingMatrix, FeatureError> {
    let fmax = validate(cfg, audio.sample_rate)?;
    let sr = audio.sample_rate as f64;
    if (grid.rate - sr).abs() > 1e-9 {
        return Err(FeatureError::GridMismatch(format!(
            "grid rate {} != sample rate {sr}",
            grid.rate
        )));
    }
    if grid.covered_units() > audio.samples.len() {
        return Err(FeatureError::GridMismatch(format!(
            "grid covers {} samples but track has {}",
            grid.covered_units(),
            audio.samples.len()
        )));
    }

    let frame_len = ((cfg.frame_ms / 1000.0 * sr) + 0.5).floor() as usize;
    let hop = ((cfg.hop_ms / 1000.0 * sr) + 0.5).floor() as usize;
    if frame_len < 2 || hop == 0 {
        return Err(FeatureError::ConfigInvalid(
            "frame/hop too short for this sample rate".into(),
        ));
    }
    let n_fft = frame_len.next_power_of_two();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sr / n_fft as f64;
    let bank = filterbank(cfg, fmax, n_bins, bin_hz);
    let window: Vec<f64> = (0..frame_len)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / frame_len as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let rows: Vec<Vec<f32>> = (0..grid.n_segments)
        .into_par_iter()
        .map(|i| {
            let (start, end) = grid.segment_bounds(i).expect("index in range");
            // Log-mel vectors for every complete STFT frame in the segment.
            let mut mel_frames: Vec<Vec<f64>> = Vec::new();
            let mut pos = start;
            let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
            while pos + frame_len <= end {
                for (k, c) in buf.iter_mut().enumerate() {
                    *c = if k < frame_len {
                        Complex::new(audio.samples[pos + k] as f64 * window[k], 0.0)
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                }
                fft.process(&mut buf);
                let mags: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm()).collect();
                mel_frames.push(
                    bank.iter()
                        .map(|f| {
                            let e: f64 = f.iter().zip(&mags).map(|(w, m)| w * m).sum();
                            (e + cfg.log_floor).ln()
                        })
                        .collect(),
                );
                pos += hop;
            }
            if mel_frames.is_empty() {
                // Segment shorter than one STFT frame: treat as silence.
                mel_frames.push(vec![cfg.log_floor.ln(); cfg.n_mels]);
            }
            let count = mel_frames.len() as f64;
            let mut row = vec![0.0f32; 2 * cfg.n_mels];
            for m in 0..cfg.n_mels {
                let mean = mel_frames.iter().map(|f| f[m]).sum::<f64>() / count;
                let var = mel_frames
                    .iter()
                    .map(|f| (f[m] - mean).powi(2))
                    .sum::<f64>()
                    / count;
                row[m] = mean as f32;
                row[cfg.n_mels + m] = var.sqrt() as f32;
            }
            row
        })
        .collect();
    EmbeddingMatrix::from_rows(rows, FeatureSource::LogMel)
}
