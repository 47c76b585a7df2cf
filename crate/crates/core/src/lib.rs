//! Harmonic speech-intelligibility enhancement toolkit.
//!
//! The pipeline estimates the fundamental frequency of voiced frames from
//! the autocorrelation of EEMD mode envelopes, splits each voiced frame with a
//! cascade of phase-compensated gammatone filters centred on the harmonics,
//! boosts the harmonic bands with a gain profile and overlap-adds the result.
//! Evaluation (ESTOI, STI categories, one-way ANOVA) and a greedy gain
//! calibration harness sit on top.
//!
//! ```no_run
//! use isetk_core::{audio, enhance, pitch};
//!
//! let noisy = audio::load_wav("noisy.wav")?;
//! let plan = noisy.plan_frames();
//! let mask = audio::detect_vuv(&noisy, &plan);
//! let cfg = enhance::EnhancementConfig::default();
//! let track = pitch::estimate_pitch_track(&noisy, &plan, &mask, &cfg.pitch)?;
//! let out = enhance::enhance_utterance(&noisy, &mask, &track, &cfg)?;
//! audio::write_wav("enhanced.wav", &out.waveform)?;
//! # Ok::<(), isetk_core::Error>(())
//! ```

pub mod audio;
pub mod calibrate;
pub mod dsp;
pub mod emd;
pub mod enhance;
mod error;
pub mod experiment;
pub mod gammatone;
pub mod metrics;
pub mod pitch;
pub mod stats;
pub mod synth;

pub use audio::Waveform;
pub use error::{Error, Result};
