use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{resample, Waveform};
use crate::error::{Error, Result};

/// Cross-fade length used where a short noise recording is looped.
pub const SEAM_CROSSFADE_SECONDS: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOffset {
    Fixed(usize),
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct MixSpec {
    pub target_snr_db: f64,
    pub noise: Waveform,
    pub offset: NoiseOffset,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixResult {
    #[serde(skip)]
    pub mixture: Waveform,
    /// Scale applied to the noise segment.
    pub alpha: f64,
    pub offset: usize,
    pub looped: bool,
    pub target_snr_db: f64,
    /// Global SNR over the whole utterance after scaling.
    pub achieved_snr_db: f64,
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Adds `alpha * noise_segment` to `speech` with `alpha` chosen so that the
/// global speech-to-noise power ratio equals the target.
pub fn mix_at_snr(speech: &Waveform, spec: &MixSpec) -> Result<MixResult> {
    if !spec.target_snr_db.is_finite() {
        return Err(Error::Contract("target SNR must be finite".into()));
    }
    let noise = resample(&spec.noise, speech.sample_rate())?;
    let n = speech.len();
    let (offset, looped, segment) = noise_segment(noise.samples(), n, spec.offset, speech.sample_rate())?;

    let ps = power(speech.samples());
    let pn = power(&segment);
    if ps <= 0.0 {
        return Err(Error::Degenerate("speech has zero power".into()));
    }
    if pn <= 0.0 {
        return Err(Error::Degenerate("noise segment has zero power".into()));
    }
    let alpha = (ps / (pn * 10f64.powf(spec.target_snr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = speech
        .samples()
        .iter()
        .zip(&segment)
        .map(|(s, v)| s + alpha * v)
        .collect();
    let achieved_snr_db = 10.0 * (ps / (alpha * alpha * pn)).log10();
    Ok(MixResult {
        mixture: speech.with_samples(mixed)?,
        alpha,
        offset,
        looped,
        target_snr_db: spec.target_snr_db,
        achieved_snr_db,
    })
}

fn noise_segment(
    noise: &[f64],
    len: usize,
    offset: NoiseOffset,
    sample_rate: u32,
) -> Result<(usize, bool, Vec<f64>)> {
    let offset = match offset {
        NoiseOffset::Fixed(o) => o,
        NoiseOffset::Random { seed } if noise.len() > len => {
            ChaCha8Rng::seed_from_u64(seed).random_range(0..=noise.len() - len)
        }
        NoiseOffset::Random { .. } => 0,
    };
    let needed = offset + len;
    if noise.len() >= needed {
        return Ok((offset, false, noise[offset..needed].to_vec()));
    }
    let looped = loop_noise(noise, needed, sample_rate)?;
    Ok((offset, true, looped[offset..needed].to_vec()))
}

/// Repeats `noise` until it holds at least `needed` samples, cross-fading
/// each seam linearly.
fn loop_noise(noise: &[f64], needed: usize, sample_rate: u32) -> Result<Vec<f64>> {
    let xf = (SEAM_CROSSFADE_SECONDS * sample_rate as f64).round() as usize;
    if noise.len() <= xf {
        return Err(Error::Degenerate(format!(
            "noise of {} samples is too short to loop",
            noise.len()
        )));
    }
    let mut out = noise.to_vec();
    while out.len() < needed {
        let base = out.len() - xf;
        for i in 0..xf {
            let w = (i as f64 + 0.5) / xf as f64;
            out[base + i] = out[base + i] * (1.0 - w) + noise[i] * w;
        }
        out.extend_from_slice(&noise[xf..]);
    }
    Ok(out)
}
