//! Harmonic emphasis of voiced frames: each voiced frame is split by the
//! gammatone cascade at its pitch harmonics, band `k` is scaled by `G_k`, and
//! the frames are overlap-added back into the utterance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{overlap_add_samples, plan_frames, VoicedMask, Waveform};
use crate::error::{Error, Result};
use crate::gammatone::{build_bank, harmonics_below_nyquist, cascade_filter, CascadeOutput, GammatoneConfig};
use crate::pitch::{estimate_pitch_track, PitchConfig, PitchTrack};

pub const GAIN_MIN: f64 = 1.0;
pub const GAIN_MAX: f64 = 10.0;
pub const GAIN_STEP: f64 = 0.25;
/// Pitch range accepted by the frame enhancer.
pub const F0_RANGE: (f64, f64) = (50.0, 400.0);

pub const ISE_ASD: &str = "ISE_ASD";
pub const GTF_F0: &str = "GTF_F0";
pub const UNIT: &str = "UNIT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    pub name: String,
    pub gains: Vec<f64>,
}

impl GainProfile {
    pub fn new(name: impl Into<String>, gains: Vec<f64>) -> Result<Self> {
        let p = Self {
            name: name.into(),
            gains,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn ise_asd() -> Self {
        Self {
            name: ISE_ASD.into(),
            gains: vec![10.0, 10.0, 4.5, 3.5, 2.5, 2.0, 1.75, 1.75, 1.5, 1.25],
        }
    }

    pub fn gtf_f0() -> Self {
        Self {
            name: GTF_F0.into(),
            gains: vec![5.0, 5.0, 4.0, 2.5],
        }
    }

    pub fn unit(harmonics: usize) -> Self {
        Self {
            name: UNIT.into(),
            gains: vec![1.0; harmonics],
        }
    }

    /// Looks up a builtin profile by case-insensitive name. `UNIT` gets
    /// `unit_len` harmonics.
    pub fn builtin(name: &str, unit_len: usize) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            ISE_ASD => Some(Self::ise_asd()),
            GTF_F0 => Some(Self::gtf_f0()),
            UNIT => Some(Self::unit(unit_len)),
            _ => None,
        }
    }

    pub fn harmonics(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::Contract(format!("profile {} has no gains", self.name)));
        }
        for (k, &g) in self.gains.iter().enumerate() {
            let on_grid = ((g - GAIN_MIN) / GAIN_STEP).fract().abs() < 1e-9;
            if !(GAIN_MIN..=GAIN_MAX).contains(&g) || !on_grid {
                return Err(Error::Contract(format!(
                    "profile {}: G_{} = {g} is outside [{GAIN_MIN}, {GAIN_MAX}] or off the {GAIN_STEP} grid",
                    self.name,
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// ISE_ASD, GTF_F0 and a 10-harmonic UNIT profile.
pub fn builtin_profiles() -> Vec<GainProfile> {
    vec![GainProfile::ise_asd(), GainProfile::gtf_f0(), GainProfile::unit(10)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhancementConfig {
    pub gain_profile: GainProfile,
    pub pitch: PitchConfig,
    pub gammatone: GammatoneConfig,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            gain_profile: GainProfile::ise_asd(),
            pitch: PitchConfig::default(),
            gammatone: GammatoneConfig::default(),
        }
    }
}

impl EnhancementConfig {
    pub fn with_profile(profile: GainProfile) -> Self {
        Self {
            gain_profile: profile,
            ..Self::default()
        }
    }
}

/// Cascade output for one frame, with the number of harmonics that fit
/// below Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBands {
    pub cascade: CascadeOutput,
    pub requested: usize,
}

impl FrameBands {
    pub fn harmonics(&self) -> usize {
        self.cascade.bands.len()
    }

    pub fn clamped(&self) -> bool {
        self.harmonics() < self.requested
    }

    /// `sum G_k y_k + r`.
    pub fn apply(&self, gains: &[f64]) -> Vec<f64> {
        self.cascade.recombine(gains)
    }

    /// `sum (G_k - 1) y_k`, the change the gains make to the frame.
    pub fn delta(&self, gains: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cascade.residual.len()];
        for (band, &g) in self.cascade.bands.iter().zip(gains) {
            if g != 1.0 {
                out.iter_mut().zip(band).for_each(|(o, v)| *o += (g - 1.0) * v);
            }
        }
        out
    }
}

fn check_f0(f0: f64) -> Result<()> {
    if !(F0_RANGE.0..=F0_RANGE.1).contains(&f0) {
        return Err(Error::Contract(format!(
            "f0 {f0} Hz outside [{}, {}] Hz",
            F0_RANGE.0, F0_RANGE.1
        )));
    }
    Ok(())
}

/// Splits a frame into the bands of harmonics `1..=harmonics` of `f0`,
/// dropping those at or above Nyquist.
pub fn frame_bands(frame: &[f64], f0: f64, harmonics: usize, fs: f64, cfg: &GammatoneConfig) -> Result<FrameBands> {
    check_f0(f0)?;
    let bank = build_bank(f0, harmonics, fs, cfg)?;
    debug_assert_eq!(bank.len(), harmonics_below_nyquist(f0, fs, harmonics));
    Ok(FrameBands {
        cascade: cascade_filter(frame, &bank),
        requested: harmonics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub samples: Vec<f64>,
    /// Harmonics actually filtered after the Nyquist clamp.
    pub harmonics: usize,
    pub clamped: bool,
}

/// `sum_k G_k y_k + r` for one frame.
pub fn enhance_frame(
    frame: &[f64],
    f0: f64,
    profile: &GainProfile,
    fs: f64,
    cfg: &GammatoneConfig,
) -> Result<FrameOutput> {
    let bands = frame_bands(frame, f0, profile.harmonics(), fs, cfg)?;
    Ok(FrameOutput {
        samples: bands.apply(&profile.gains),
        harmonics: bands.harmonics(),
        clamped: bands.clamped(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClampRecord {
    pub frame: usize,
    pub harmonics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancementMetadata {
    pub profile: GainProfile,
    pub frames: usize,
    pub voiced_frames: usize,
    pub enhanced_frames: usize,
    pub pitch_fallback_frames: usize,
    pub clamps: Vec<ClampRecord>,
    pub warnings: Vec<String>,
    /// Factor applied to keep the written waveform within full scale.
    pub scale_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub waveform: Waveform,
    pub metadata: EnhancementMetadata,
}

impl Enhanced {
    /// Scales the waveform down if it would clip, recording the factor.
    pub fn limit_peak(&mut self) -> f64 {
        self.metadata.scale_factor = self.waveform.limit_peak();
        self.metadata.scale_factor
    }
}

/// The track's F0 for frame `q`, clamped into the enhancer's range. The
/// discrete lag grid can place estimates marginally outside it.
fn frame_f0(track: &PitchTrack, q: usize) -> Option<f64> {
    track.f0(q).map(|f| f.clamp(F0_RANGE.0, F0_RANGE.1))
}

/// Per-frame band decompositions for every voiced frame with a pitch value.
pub(crate) fn utterance_bands(
    w: &Waveform,
    mask: &VoicedMask,
    track: &PitchTrack,
    harmonics: usize,
    cfg: &GammatoneConfig,
) -> Result<Vec<Option<FrameBands>>> {
    let plan = plan_frames(w);
    if mask.len() != plan.frame_count() || track.len() != plan.frame_count() {
        return Err(Error::Contract(format!(
            "plan has {} frames, mask {}, pitch track {}",
            plan.frame_count(),
            mask.len(),
            track.len()
        )));
    }
    let fs = w.sample_rate() as f64;
    (0..plan.frame_count())
        .into_par_iter()
        .map(|q| match (mask.is_voiced(q), frame_f0(track, q)) {
            (true, Some(f0)) => frame_bands(&plan.frame(w.samples(), q), f0, harmonics, fs, cfg).map(Some),
            _ => Ok(None),
        })
        .collect()
}

/// Input plus the overlap-added per-frame changes. Samples covered only by
/// unchanged frames are returned bit-for-bit.
pub(crate) fn apply_deltas(w: &Waveform, deltas: Vec<Option<Vec<f64>>>) -> Result<Waveform> {
    let plan = plan_frames(w);
    let frames: Vec<Vec<f64>> = deltas
        .into_iter()
        .map(|d| d.unwrap_or_else(|| vec![0.0; plan.frame_length()]))
        .collect();
    let delta = overlap_add_samples(&frames, &plan)?;
    w.with_samples(w.samples().iter().zip(&delta).map(|(x, d)| x + d).collect())
}

/// Enhances every voiced frame that has a pitch value and reassembles the
/// utterance; unvoiced frames pass through.
pub fn enhance_utterance(
    w: &Waveform,
    mask: &VoicedMask,
    track: &PitchTrack,
    cfg: &EnhancementConfig,
) -> Result<Enhanced> {
    cfg.gain_profile.validate()?;
    let gains = &cfg.gain_profile.gains;
    let bands = utterance_bands(w, mask, track, gains.len(), &cfg.gammatone)?;

    let mut metadata = EnhancementMetadata {
        profile: cfg.gain_profile.clone(),
        frames: bands.len(),
        voiced_frames: mask.voiced_count(),
        enhanced_frames: 0,
        pitch_fallback_frames: track.fallback_count(),
        clamps: Vec::new(),
        warnings: Vec::new(),
        scale_factor: 1.0,
    };
    let mut missing = 0;
    for (q, b) in bands.iter().enumerate() {
        match b {
            Some(b) => {
                metadata.enhanced_frames += 1;
                if b.clamped() {
                    metadata.clamps.push(ClampRecord {
                        frame: q,
                        harmonics: b.harmonics(),
                    });
                }
            }
            None if mask.is_voiced(q) => missing += 1,
            None => {}
        }
    }
    if missing > 0 {
        let msg = format!("{missing} voiced frames without a pitch value were left unmodified");
        log::warn!("{msg}");
        metadata.warnings.push(msg);
    }

    let deltas = bands.into_iter().map(|b| b.map(|b| b.delta(gains))).collect();
    Ok(Enhanced {
        waveform: apply_deltas(w, deltas)?,
        metadata,
    })
}

/// Pitch estimation followed by enhancement. If no voiced frame yields a
/// pitch estimate the input is returned unmodified with a warning.
pub fn enhance_with_pitch(w: &Waveform, mask: &VoicedMask, cfg: &EnhancementConfig) -> Result<Enhanced> {
    let plan = plan_frames(w);
    match estimate_pitch_track(w, &plan, mask, &cfg.pitch) {
        Ok(track) => enhance_utterance(w, mask, &track, cfg),
        Err(Error::PitchUnavailable(reason)) => {
            let msg = format!("{reason}; utterance left unmodified");
            log::warn!("{msg}");
            Ok(Enhanced {
                waveform: w.clone(),
                metadata: EnhancementMetadata {
                    profile: cfg.gain_profile.clone(),
                    frames: plan.frame_count(),
                    voiced_frames: mask.voiced_count(),
                    enhanced_frames: 0,
                    pitch_fallback_frames: 0,
                    clamps: Vec::new(),
                    warnings: vec![msg],
                    scale_factor: 1.0,
                },
            })
        }
        Err(e) => Err(e),
    }
}
