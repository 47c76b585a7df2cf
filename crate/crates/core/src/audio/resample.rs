use std::f64::consts::PI;

use super::Waveform;
use crate::error::Result;

/// Kernel length in input samples.
pub const RESAMPLER_TAPS: usize = 64;

const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.95;

/// Rational-ratio windowed-sinc resampler with one precomputed tap set per
/// output phase.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    phases: Vec<[f64; RESAMPLER_TAPS]>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        let g = gcd(from_rate as usize, to_rate as usize);
        let up = to_rate as usize / g;
        let down = from_rate as usize / g;
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half = (RESAMPLER_TAPS / 2) as f64;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; RESAMPLER_TAPS];
                for (j, tap) in taps.iter_mut().enumerate() {
                    // tap j multiplies x[i + j - (TAPS/2 - 1)]
                    let t = j as f64 - (half - 1.0) - frac;
                    *tap = cutoff * sinc(cutoff * t) * kaiser(t / half);
                }
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|v| *v /= sum);
                taps
            })
            .collect();
        Self { up, down, phases }
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return x.to_vec();
        }
        let out_len = (x.len() * self.up).div_ceil(self.down);
        let offset = RESAMPLER_TAPS / 2 - 1;
        (0..out_len)
            .map(|n| {
                let pos = n * self.down;
                let i = pos / self.up;
                let taps = &self.phases[pos % self.up];
                let mut acc = 0.0;
                for (j, &h) in taps.iter().enumerate() {
                    let idx = i as isize + j as isize - offset as isize;
                    if idx >= 0 && (idx as usize) < x.len() {
                        acc += h * x[idx as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Resamples `w` to `to_rate`; a no-op copy when the rates already match.
pub fn resample(w: &Waveform, to_rate: u32) -> Result<Waveform> {
    if w.sample_rate() == to_rate {
        return Ok(w.clone());
    }
    let y = Resampler::new(w.sample_rate(), to_rate).process(w.samples());
    Waveform::new(y, to_rate)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn kaiser(x: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / bessel_i0(KAISER_BETA)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}
