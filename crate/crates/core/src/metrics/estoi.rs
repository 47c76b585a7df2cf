//! Extended short-time objective intelligibility.
//!
//! Both signals are resampled to 10 kHz, frames more than 40 dB below the
//! loudest clean frame are dropped from both, and one-third-octave band
//! envelopes are computed from a 256-sample Hann STFT. For every 30-frame
//! segment the band-by-time matrices are normalised along time (per band) and
//! then across bands (per frame); the score is the mean inner product of the
//! normalised columns.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::audio::{Resampler, Waveform};
use crate::dsp;
use crate::error::{Error, Result};

pub type EstoiScore = f64;

/// Guards the normalisations against division by zero.
const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstoiConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub fft_size: usize,
    pub bands: usize,
    pub lowest_center_hz: f64,
    pub segment_frames: usize,
    pub dynamic_range_db: f64,
}

impl Default for EstoiConfig {
    fn default() -> Self {
        Self {
            sample_rate: 10_000,
            frame_length: 256,
            fft_size: 512,
            bands: 15,
            lowest_center_hz: 150.0,
            segment_frames: 30,
            dynamic_range_db: 40.0,
        }
    }
}

impl EstoiConfig {
    pub fn hop(&self) -> usize {
        self.frame_length / 2
    }
}

/// `[lo, hi)` FFT bin ranges of the one-third-octave bands. Edges sit at
/// `fc * 2^(-1/6)` and `fc * 2^(1/6)`, snapped to the nearest bin.
pub fn third_octave_bands(cfg: &EstoiConfig) -> Vec<(usize, usize)> {
    let bins = cfg.fft_size / 2 + 1;
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let nearest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| {
                let da = (a as f64 * bin_hz - f).powi(2);
                let db = (b as f64 * bin_hz - f).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0)
    };
    (0..cfg.bands)
        .map(|k| {
            let k = k as f64;
            let lo = cfg.lowest_center_hz * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = cfg.lowest_center_hz * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Hann window of `n` points without the zero end points.
fn hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Drops frames whose clean energy is more than the dynamic range below the
/// loudest one and overlap-adds the surviving windowed frames of both signals.
fn remove_silent_frames(x: &[f64], y: &[f64], cfg: &EstoiConfig) -> (Vec<f64>, Vec<f64>) {
    let (len, hop) = (cfg.frame_length, cfg.hop());
    let w = hann(len);
    let starts: Vec<usize> = (0..=x.len().saturating_sub(len)).step_by(hop).collect();
    let window = |s: &[f64], start: usize| -> Vec<f64> {
        s[start..start + len].iter().zip(&w).map(|(a, b)| a * b).collect()
    };
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| 20.0 * (window(x, s).iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10())
        .collect();
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > max - cfg.dynamic_range_db)
        .map(|(&s, _)| s)
        .collect();
    let out_len = if kept.is_empty() { 0 } else { (kept.len() - 1) * hop + len };
    let (mut xs, mut ys) = (vec![0.0; out_len], vec![0.0; out_len]);
    for (i, &s) in kept.iter().enumerate() {
        for (j, (a, b)) in window(x, s).into_iter().zip(window(y, s)).enumerate() {
            xs[i * hop + j] += a;
            ys[i * hop + j] += b;
        }
    }
    (xs, ys)
}

/// Band magnitudes `[band][frame]`.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)], cfg: &EstoiConfig) -> Vec<Vec<f64>> {
    let (len, hop, nfft) = (cfg.frame_length, cfg.hop(), cfg.fft_size);
    let w = hann(len);
    let fft = dsp::forward(nfft);
    let mut out = vec![Vec::new(); bands.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut start = 0;
    // frames start strictly before len(x) - frame_length
    while start + len < x.len() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, c) in buf.iter_mut().take(len).enumerate() {
            c.re = x[start + i] * w[i];
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            out[b].push(buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
        }
        start += hop;
    }
    out
}

fn normalise(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= m);
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt() + EPS;
    v.iter_mut().for_each(|a| *a /= norm);
}

/// ESTOI of two sample sequences already at `cfg.sample_rate`.
pub fn estoi_samples(clean: &[f64], degraded: &[f64], cfg: &EstoiConfig) -> Result<EstoiScore> {
    let n = clean.len().min(degraded.len());
    let (x, y) = (&clean[..n], &degraded[..n]);
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::MetricUndefined("clean reference is silent".into()));
    }
    let (xs, ys) = remove_silent_frames(x, y, cfg);
    let bands = third_octave_bands(cfg);
    let xb = band_envelopes(&xs, &bands, cfg);
    let yb = band_envelopes(&ys, &bands, cfg);
    let frames = xb.first().map_or(0, Vec::len);
    let seg = cfg.segment_frames;
    if frames < seg {
        return Err(Error::MetricUndefined(format!(
            "{frames} active frames, at least {seg} needed"
        )));
    }

    let nb = bands.len();
    let mut total = 0.0;
    let mut xm = vec![vec![0.0; seg]; nb];
    let mut ym = vec![vec![0.0; seg]; nb];
    let (mut xc, mut yc) = (vec![0.0; nb], vec![0.0; nb]);
    for end in seg..=frames {
        for b in 0..nb {
            xm[b].copy_from_slice(&xb[b][end - seg..end]);
            ym[b].copy_from_slice(&yb[b][end - seg..end]);
            normalise(&mut xm[b]);
            normalise(&mut ym[b]);
        }
        for t in 0..seg {
            for b in 0..nb {
                xc[b] = xm[b][t];
                yc[b] = ym[b][t];
            }
            normalise(&mut xc);
            normalise(&mut yc);
            total += xc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / ((frames - seg + 1) * seg) as f64)
}

/// A clean reference resampled once for repeated scoring.
#[derive(Debug, Clone)]
pub struct EstoiReference {
    samples: Vec<f64>,
    source_rate: u32,
    cfg: EstoiConfig,
}

impl EstoiReference {
    pub fn new(clean: &Waveform, cfg: EstoiConfig) -> Self {
        Self {
            samples: to_rate(clean.samples(), clean.sample_rate(), cfg.sample_rate),
            source_rate: clean.sample_rate(),
            cfg,
        }
    }

    pub fn score(&self, degraded: &Waveform) -> Result<EstoiScore> {
        self.score_samples(degraded.samples(), degraded.sample_rate())
    }

    pub fn score_samples(&self, degraded: &[f64], sample_rate: u32) -> Result<EstoiScore> {
        if sample_rate != self.source_rate {
            return Err(Error::Contract(format!(
                "clean at {} Hz, degraded at {sample_rate} Hz",
                self.source_rate
            )));
        }
        let y = to_rate(degraded, sample_rate, self.cfg.sample_rate);
        estoi_samples(&self.samples, &y, &self.cfg)
    }
}

fn to_rate(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        x.to_vec()
    } else {
        Resampler::new(from, to).process(x)
    }
}

/// ESTOI of `degraded` against the `clean` reference with the standard
/// constants. Signals are trimmed to the shorter duration.
pub fn estoi(clean: &Waveform, degraded: &Waveform) -> Result<EstoiScore> {
    EstoiReference::new(clean, EstoiConfig::default()).score(degraded)
}
