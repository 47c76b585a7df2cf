//! Audio plumbing: the [`Waveform`] carrier, WAV I/O, resampling, framing,
//! voicing masks and SNR-controlled noise mixing.

mod framing;
mod mix;
mod resample;
mod vuv;
mod wav;

pub use framing::{overlap_add, plan_frames, synthesis_weight, FramePlan, FRAME_SECONDS};
pub use mix::{mix_at_snr, power, MixResult, MixSpec, NoiseOffset, SEAM_CROSSFADE_SECONDS};
pub use resample::{resample, Resampler, RESAMPLER_TAPS};
pub use vuv::{
    detect_vuv, format_vuv_labels, labels_to_mask, load_vuv_labels, parse_vuv_labels, LabelRegion, MaskSource, VoicedMask,
    DETECTOR_RMS_RATIO, DETECTOR_ZCR_MAX,
};
pub use wav::{load_wav, write_wav};

pub(crate) use framing::overlap_add_samples;

use crate::error::{Error, Result};

/// A mono sample sequence with its sampling rate.
///
/// Samples are nominally in `[-1, 1]`; construction rejects empty buffers,
/// a zero rate, and non-finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Contract("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Contract("waveform must hold at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        power(&self.samples).sqrt()
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Waveform::new(
            self.samples.iter().map(|s| s * factor).collect(),
            self.sample_rate,
        )
    }

    /// Returns a copy with the same rate and new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Waveform::new(samples, self.sample_rate)
    }

    /// Truncates to `len` samples (no-op when already shorter).
    pub fn truncated(&self, len: usize) -> Result<Self> {
        let n = len.min(self.samples.len());
        Waveform::new(self.samples[..n].to_vec(), self.sample_rate)
    }

    /// Peak-normalises to at most unit magnitude. Returns the applied factor
    /// (1.0 when nothing was clipped).
    pub fn limit_peak(&mut self) -> f64 {
        let peak = self.peak();
        if peak > 1.0 {
            let f = 1.0 / peak;
            self.samples.iter_mut().for_each(|s| *s *= f);
            f
        } else {
            1.0
        }
    }
}
