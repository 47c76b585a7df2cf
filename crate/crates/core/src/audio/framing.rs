use serde::Serialize;

use super::Waveform;
use crate::error::{Error, Result};

/// Analysis frame duration.
pub const FRAME_SECONDS: f64 = 0.032;

/// Index map of 50%-overlapping analysis frames over one signal.
///
/// Frames are rectangular slices; the last one is zero-padded past the end of
/// the signal. Reassembly uses a triangular cross-fade (see [`overlap_add`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FramePlan {
    frame_length: usize,
    hop: usize,
    signal_len: usize,
    sample_rate: u32,
    starts: Vec<usize>,
}

impl FramePlan {
    pub fn new(signal_len: usize, sample_rate: u32) -> Result<Self> {
        if signal_len == 0 || sample_rate == 0 {
            return Err(Error::Contract("frame plan needs a non-empty signal".into()));
        }
        let mut frame_length = (FRAME_SECONDS * sample_rate as f64).round() as usize;
        // hop must be exactly half a frame
        frame_length += frame_length % 2;
        let frame_length = frame_length.max(2);
        let hop = frame_length / 2;
        let count = if signal_len <= frame_length {
            if signal_len < frame_length {
                log::warn!(
                    "signal of {signal_len} samples is shorter than one {frame_length}-sample frame; padding"
                );
            }
            1
        } else {
            (signal_len - frame_length).div_ceil(hop) + 1
        };
        Ok(Self {
            frame_length,
            hop,
            signal_len,
            sample_rate,
            starts: (0..count).map(|q| q * hop).collect(),
        })
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn frame_count(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn start_secs(&self, q: usize) -> f64 {
        self.starts[q] as f64 / self.sample_rate as f64
    }

    /// Copies frame `q` out of `samples`, zero-padding past the end.
    pub fn frame(&self, samples: &[f64], q: usize) -> Vec<f64> {
        let start = self.starts[q];
        let mut out = vec![0.0; self.frame_length];
        if start < samples.len() {
            let end = (start + self.frame_length).min(samples.len());
            out[..end - start].copy_from_slice(&samples[start..end]);
        }
        out
    }

    pub fn split(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        (0..self.frame_count()).map(|q| self.frame(samples, q)).collect()
    }
}

/// Frame plan for a waveform: 32 ms frames, 50% overlap.
pub fn plan_frames(w: &Waveform) -> FramePlan {
    FramePlan::new(w.len(), w.sample_rate()).expect("waveforms are never empty")
}

impl Waveform {
    pub fn plan_frames(&self) -> FramePlan {
        plan_frames(self)
    }
}

/// Triangular synthesis weight at offset `n` within a frame. Adjacent frames'
/// weights sum to exactly one at 50% overlap.
pub fn synthesis_weight(n: usize, hop: usize) -> f64 {
    if n < hop {
        (n as f64 + 0.5) / hop as f64
    } else {
        (2 * hop - n) as f64 / hop as f64 - 0.5 / hop as f64
    }
}

/// Reassembles frames with a triangular cross-fade, normalised by the summed
/// weights so the signal edges are reproduced as well as the interior.
pub fn overlap_add(frames: &[Vec<f64>], plan: &FramePlan) -> Result<Waveform> {
    Waveform::new(overlap_add_samples(frames, plan)?, plan.sample_rate)
}

pub(crate) fn overlap_add_samples(frames: &[Vec<f64>], plan: &FramePlan) -> Result<Vec<f64>> {
    if frames.len() != plan.frame_count() {
        return Err(Error::Contract(format!(
            "{} frames supplied for a {}-frame plan",
            frames.len(),
            plan.frame_count()
        )));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != plan.frame_length) {
        return Err(Error::Contract(format!(
            "frame of {} samples, plan expects {}",
            f.len(),
            plan.frame_length
        )));
    }
    let mut acc = vec![0.0; plan.signal_len];
    let mut norm = vec![0.0; plan.signal_len];
    for (frame, &start) in frames.iter().zip(&plan.starts) {
        let end = (start + plan.frame_length).min(plan.signal_len);
        for t in start..end {
            let w = synthesis_weight(t - start, plan.hop);
            acc[t] += w * frame[t - start];
            norm[t] += w;
        }
    }
    Ok(acc.iter().zip(&norm).map(|(a, n)| a / n).collect())
}
