//! Phase-compensated gammatone filters centred on pitch harmonics, and the
//! subtractive cascade that splits a frame into harmonic bands plus a residual.
//!
//! The compensated response is
//! `h(t) = a (t + tc)^(n-1) cos(2 pi fc t) exp(-2 pi b (t + tc))` for
//! `t >= -tc`, with `tc = (n - 1) / (2 pi b)`, so every filter's envelope
//! peaks at `t = 0` and the bands stay time-aligned with the input frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

/// Envelope level (relative to its peak) at which the response is cut.
const TRUNCATION_DB: f64 = -60.0;
/// Hard cap on the response length after the envelope onset, in units of 1/b.
const TRUNCATION_CAP_BANDWIDTHS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `b = ratio * F0` for every harmonic.
    #[default]
    Fixed,
    /// `b = ratio * k * F0` for harmonic `k`.
    HarmonicScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammatoneConfig {
    pub order: u32,
    pub bandwidth_ratio: f64,
    pub bandwidth_rule: BandwidthRule,
}

impl Default for GammatoneConfig {
    fn default() -> Self {
        Self {
            order: 4,
            bandwidth_ratio: 0.25,
            bandwidth_rule: BandwidthRule::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammatoneSpec {
    pub order: u32,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    /// Phase-compensation shift `(n - 1) / (2 pi b)` in seconds.
    pub compensation_secs: f64,
    /// Amplitude that makes the discrete response unit-gain at the centre.
    pub amplitude: f64,
    pub truncation_len: usize,
}

/// A sampled, normalised, phase-compensated impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneFilter {
    pub spec: GammatoneSpec,
    pub sample_rate: f64,
    /// `response[origin]` is the sample at `t = 0`.
    pub response: Vec<f64>,
    pub origin: usize,
}

impl GammatoneFilter {
    fn time(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) / self.sample_rate
    }

    /// Analytic envelope `a (t + tc)^(n-1) exp(-2 pi b (t + tc))` on the
    /// response's sample grid.
    pub fn envelope(&self) -> Vec<f64> {
        let s = &self.spec;
        (0..self.response.len())
            .map(|i| {
                let u = self.time(i) + s.compensation_secs;
                s.amplitude * u.powi(s.order as i32 - 1) * (-2.0 * PI * s.bandwidth_hz * u).exp()
            })
            .collect()
    }

    /// Offset in samples of the envelope maximum from `t = 0`.
    pub fn envelope_peak_offset(&self) -> isize {
        let env = self.envelope();
        let peak = (0..env.len())
            .max_by(|&a, &b| env[a].total_cmp(&env[b]))
            .unwrap_or(self.origin);
        peak as isize - self.origin as isize
    }

    /// `|H(f)|` of the discrete response.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        dtft_magnitude(&self.response, self.origin, freq_hz / self.sample_rate)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        dsp::convolve_same(x, &self.response, self.origin)
    }
}

fn dtft_magnitude(h: &[f64], origin: usize, cycles_per_sample: f64) -> f64 {
    let w = 2.0 * PI * cycles_per_sample;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in h.iter().enumerate() {
        let m = i as f64 - origin as f64;
        re += v * (w * m).cos();
        im -= v * (w * m).sin();
    }
    re.hypot(im)
}

pub fn bandwidth(f0: f64, k: usize, cfg: &GammatoneConfig) -> f64 {
    match cfg.bandwidth_rule {
        BandwidthRule::Fixed => cfg.bandwidth_ratio * f0,
        BandwidthRule::HarmonicScaled => cfg.bandwidth_ratio * k as f64 * f0,
    }
}

/// Filter for harmonic `k` (1-based) of `f0`.
pub fn build_filter(f0: f64, k: usize, fs: f64, cfg: &GammatoneConfig) -> Result<GammatoneFilter> {
    if !(f0.is_finite() && f0 > 0.0) || k == 0 || cfg.order == 0 || fs <= 0.0 {
        return Err(Error::Contract(format!(
            "invalid gammatone request: f0 {f0}, k {k}, order {}, fs {fs}",
            cfg.order
        )));
    }
    let center = k as f64 * f0;
    if center >= fs / 2.0 {
        return Err(Error::FilterOutOfBand {
            center_hz: center,
            nyquist_hz: fs / 2.0,
        });
    }
    let b = bandwidth(f0, k, cfg);
    let n = cfg.order as i32;
    let tc = (n - 1) as f64 / (2.0 * PI * b);
    let env = |u: f64| u.powi(n - 1) * (-2.0 * PI * b * u).exp();

    // solve env(u) = peak * 10^(-60/20) beyond the peak by bisection
    let peak_u = tc;
    let target = env(peak_u) * 10f64.powf(TRUNCATION_DB / 20.0);
    let cap = TRUNCATION_CAP_BANDWIDTHS / b;
    let u_end = if env(cap) >= target {
        cap
    } else {
        let (mut lo, mut hi) = (peak_u, cap);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if env(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let first = (-tc * fs).ceil() as i64;
    let last = ((u_end - tc) * fs).floor() as i64;
    let origin = (-first) as usize;
    let mut response: Vec<f64> = (first..=last)
        .map(|m| {
            let t = m as f64 / fs;
            env(t + tc) * (2.0 * PI * center * t).cos()
        })
        .collect();
    let gain = dtft_magnitude(&response, origin, center / fs);
    let amplitude = 1.0 / gain;
    response.iter_mut().for_each(|v| *v *= amplitude);

    Ok(GammatoneFilter {
        spec: GammatoneSpec {
            order: cfg.order,
            center_hz: center,
            bandwidth_hz: b,
            compensation_secs: tc,
            amplitude,
            truncation_len: response.len(),
        },
        sample_rate: fs,
        response,
        origin,
    })
}

/// Number of harmonics of `f0` strictly below Nyquist, capped at `wanted`.
pub fn harmonics_below_nyquist(f0: f64, fs: f64, wanted: usize) -> usize {
    let mut l = 0;
    while l < wanted && (l + 1) as f64 * f0 < fs / 2.0 {
        l += 1;
    }
    l
}

/// Filters for harmonics `1..=L`, with `L` clamped below Nyquist.
pub fn build_bank(f0: f64, wanted: usize, fs: f64, cfg: &GammatoneConfig) -> Result<Vec<GammatoneFilter>> {
    (1..=harmonics_below_nyquist(f0, fs, wanted))
        .map(|k| build_filter(f0, k, fs, cfg))
        .collect()
}

/// Band signals of the subtractive cascade and what is left after the last
/// filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub bands: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

impl CascadeOutput {
    /// `sum_k gains[k] * band_k + residual`; bands without a gain count once.
    pub fn recombine(&self, gains: &[f64]) -> Vec<f64> {
        let mut out = self.residual.clone();
        for (k, band) in self.bands.iter().enumerate() {
            let g = gains.get(k).copied().unwrap_or(1.0);
            out.iter_mut().zip(band).for_each(|(o, v)| *o += g * v);
        }
        out
    }
}

/// Runs the cascade: band `k` is the previous remainder filtered by `h_k`,
/// and the new remainder is the previous one minus that band.
pub fn cascade_filter(frame: &[f64], filters: &[GammatoneFilter]) -> CascadeOutput {
    let mut remainder = frame.to_vec();
    let mut bands = Vec::with_capacity(filters.len());
    for f in filters {
        let y = f.apply(&remainder);
        remainder.iter_mut().zip(&y).for_each(|(r, v)| *r -= v);
        bands.push(y);
    }
    CascadeOutput {
        bands,
        residual: remainder,
    }
}
