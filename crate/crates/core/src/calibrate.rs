//! Greedy gain calibration: the gains are fixed one filter at a time, each at
//! the grid value that maximises the mean training-set ESTOI given the gains
//! already chosen, with every later gain held at one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{VoicedMask, Waveform};
use crate::enhance::{apply_deltas, utterance_bands, FrameBands, GainProfile, GAIN_MAX, GAIN_MIN, GAIN_STEP};
use crate::error::{Error, Result};
use crate::gammatone::GammatoneConfig;
use crate::metrics::{EstoiConfig, EstoiReference};
use crate::pitch::{estimate_pitch_track, PitchConfig};

#[derive(Debug, Clone)]
pub struct TrainingItem {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub mask: VoicedMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Number of harmonic filters `L`.
    pub harmonics: usize,
    pub step: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    pub pitch: PitchConfig,
    pub gammatone: GammatoneConfig,
    pub profile_name: String,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            harmonics: 10,
            step: GAIN_STEP,
            min_gain: GAIN_MIN,
            max_gain: GAIN_MAX,
            pitch: PitchConfig::default(),
            gammatone: GammatoneConfig::default(),
            profile_name: "calibrated".into(),
        }
    }
}

impl CalibrationConfig {
    /// `min, min + step, ..., max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.max_gain - self.min_gain) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min_gain + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// 1-based filter index.
    pub filter: usize,
    pub gain: f64,
    pub mean_estoi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRun {
    pub profile: GainProfile,
    /// Every evaluated point, filter by filter, in sweep order.
    pub traces: Vec<SweepPoint>,
    pub unit_mean_estoi: f64,
    pub final_mean_estoi: f64,
    pub items: usize,
    /// Items contributing no enhanced frame (no voicing or no pitch).
    pub skipped_items: Vec<String>,
}

impl CalibrationRun {
    pub fn trace(&self, filter: usize) -> impl Iterator<Item = &SweepPoint> {
        self.traces.iter().filter(move |p| p.filter == filter)
    }

    /// `filter,gain,mean_estoi`.
    pub fn traces_to_csv(&self) -> String {
        let mut s = String::from("filter,gain,mean_estoi\n");
        for p in &self.traces {
            s.push_str(&format!("{},{:.2},{:.6}\n", p.filter, p.gain, p.mean_estoi));
        }
        s
    }

    /// `{"name": ..., "gains": [...]}`.
    pub fn profile_json(&self) -> String {
        serde_json::to_string_pretty(&self.profile).expect("profiles always serialise") + "\n"
    }
}

/// Grid argmax with ties resolved to the smaller gain.
pub fn argmax_smallest(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &(g, v) in points {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((g, v)),
        }
    }
    best
}

struct Prepared {
    reference: EstoiReference,
    noisy: Waveform,
    bands: Vec<Option<FrameBands>>,
}

impl Prepared {
    fn score(&self, gains: &[f64]) -> Result<f64> {
        let deltas = self.bands.iter().map(|b| b.as_ref().map(|b| b.delta(gains))).collect();
        self.reference.score(&apply_deltas(&self.noisy, deltas)?)
    }
}

pub fn calibrate_gains(items: &[TrainingItem], cfg: &CalibrationConfig) -> Result<CalibrationRun> {
    if items.is_empty() {
        return Err(Error::Contract("calibration needs at least one training item".into()));
    }
    if cfg.harmonics == 0 || cfg.step.is_nan() || cfg.step <= 0.0 || cfg.min_gain > cfg.max_gain {
        return Err(Error::Contract(format!(
            "bad calibration grid: L {}, step {}, bounds [{}, {}]",
            cfg.harmonics, cfg.step, cfg.min_gain, cfg.max_gain
        )));
    }
    let mut prepared = Vec::with_capacity(items.len());
    let mut skipped = Vec::new();
    for item in items {
        let plan = item.noisy.plan_frames();
        let track = match estimate_pitch_track(&item.noisy, &plan, &item.mask, &cfg.pitch) {
            Ok(t) => Some(t),
            Err(Error::PitchUnavailable(_)) => None,
            Err(e) => return Err(e),
        };
        let bands = match &track {
            Some(t) => utterance_bands(&item.noisy, &item.mask, t, cfg.harmonics, &cfg.gammatone)?,
            None => vec![None; plan.frame_count()],
        };
        if bands.iter().all(Option::is_none) {
            log::warn!("training item {} has no enhanceable frame", item.id);
            skipped.push(item.id.clone());
        }
        prepared.push(Prepared {
            reference: EstoiReference::new(&item.clean, EstoiConfig::default()),
            noisy: item.noisy.clone(),
            bands,
        });
    }
    if skipped.len() == items.len() {
        return Err(Error::CalibrationImpossible(
            "no training item has a voiced frame with a pitch estimate".into(),
        ));
    }

    let mean_score = |gains: &[f64]| -> Result<f64> {
        let scores: Vec<f64> = prepared.iter().map(|p| p.score(gains)).collect::<Result<_>>()?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };

    let grid = cfg.grid();
    let mut gains = vec![1.0; cfg.harmonics];
    let unit_mean_estoi = mean_score(&gains)?;
    let mut traces = Vec::with_capacity(grid.len() * cfg.harmonics);
    let mut final_mean_estoi = unit_mean_estoi;
    for k in 0..cfg.harmonics {
        let sweep: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&g| {
                let mut trial = gains.clone();
                trial[k] = g;
                mean_score(&trial).map(|v| (g, v))
            })
            .collect::<Result<_>>()?;
        let (best_gain, best) = argmax_smallest(&sweep).expect("grid is never empty");
        log::info!("G_{} = {best_gain} (mean ESTOI {best:.4})", k + 1);
        traces.extend(sweep.iter().map(|&(gain, mean_estoi)| SweepPoint {
            filter: k + 1,
            gain,
            mean_estoi,
        }));
        gains[k] = best_gain;
        final_mean_estoi = best;
    }
    Ok(CalibrationRun {
        profile: GainProfile {
            name: cfg.profile_name.clone(),
            gains,
        },
        traces,
        unit_mean_estoi,
        final_mean_estoi,
        items: items.len(),
        skipped_items: skipped,
    })
}
