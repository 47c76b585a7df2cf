//! Fundamental-frequency estimation from the periodicity of EEMD mode
//! envelopes.
//!
//! Each voiced frame is decomposed with EEMD; every mode's instantaneous
//! amplitude (the magnitude of its analytic signal) is autocorrelated, and the
//! earliest qualifying ACF peak inside the allowed period range yields one
//! candidate per mode. The candidate with the strongest normalised peak wins.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::audio::{FramePlan, VoicedMask, Waveform};
use crate::dsp;
use crate::emd::{eemd_with, EemdConfig, ImfDecomposition};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub eemd: EemdConfig,
    pub f_min: f64,
    pub f_max: f64,
    /// Minimum normalised ACF value for a local maximum to count as a peak.
    pub peak_floor: f64,
    /// EEMD noise seed. Every frame uses the same seed, so identical frames
    /// always receive identical estimates.
    pub seed: u64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            eemd: EemdConfig::default(),
            f_min: 50.0,
            f_max: 400.0,
            peak_floor: 0.3,
            seed: 0,
        }
    }
}

impl PitchConfig {
    pub fn lag_range(&self, fs: f64) -> (usize, usize) {
        (
            (fs / self.f_max).floor() as usize,
            (fs / self.f_min).ceil() as usize,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitchCandidate {
    /// 1-based mode index.
    pub imf_index: usize,
    pub lag: usize,
    pub f0: f64,
    pub acf_peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PitchSource {
    Unvoiced,
    Estimated,
    /// Voiced frame without a candidate; value copied from the nearest
    /// earlier voiced frame.
    CarriedForward,
    /// Voiced frame without a candidate and no earlier estimate; value is the
    /// median of the frames that did produce one.
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePitch {
    pub f0: Option<f64>,
    pub source: PitchSource,
    pub candidates: Vec<PitchCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PitchTrack {
    pub frames: Vec<FramePitch>,
    pub frame_starts_secs: Vec<f64>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn f0(&self, q: usize) -> Option<f64> {
        self.frames[q].f0
    }

    pub fn estimates(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter_map(|f| f.f0)
    }

    pub fn fallback_count(&self) -> usize {
        self.frames
            .iter()
            .filter(|f| matches!(f.source, PitchSource::CarriedForward | PitchSource::Median))
            .count()
    }

    /// `frame_index,start_sec,voiced,f0_hz`; unvoiced frames leave `f0_hz` empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_index,start_sec,voiced,f0_hz\n");
        for (q, (f, start)) in self.frames.iter().zip(&self.frame_starts_secs).enumerate() {
            let voiced = f.source != PitchSource::Unvoiced;
            let f0 = f.f0.map(|v| format!("{v:.3}")).unwrap_or_default();
            s.push_str(&format!("{q},{start:.4},{},{f0}\n", voiced as u8));
        }
        s
    }
}

/// Instantaneous amplitude of every mode: `|IMF + j H{IMF}|`.
pub fn instantaneous_amplitudes(dec: &ImfDecomposition) -> Vec<Vec<f64>> {
    dec.imfs.iter().map(|imf| dsp::envelope(imf)).collect()
}

/// Autocorrelation of a mean-removed sequence, normalised so lag 0 is 1.
/// Returns `None` for a constant sequence (nothing periodic to find).
pub fn amplitude_acf(a: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    if n == 0 {
        return None;
    }
    let mean = a.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = a.iter().map(|v| v - mean).collect();
    let energy: f64 = centred.iter().map(|v| v * v).sum();
    let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if energy <= (1e-12 * peak).powi(2) * n as f64 || energy == 0.0 {
        return None;
    }
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = centred.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::default());
    dsp::forward(size).process(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex::new(z.norm_sqr(), 0.0));
    dsp::inverse(size).process(&mut buf);
    let r0 = buf[0].re;
    Some(buf[..n].iter().map(|z| z.re / r0).collect())
}

/// Earliest local maximum of `r` within the allowed lag range whose value
/// reaches the peak floor.
pub fn extract_candidate(
    r: &[f64],
    fs: f64,
    imf_index: usize,
    cfg: &PitchConfig,
) -> Option<PitchCandidate> {
    let (lo, hi) = cfg.lag_range(fs);
    let lo = lo.max(1);
    let hi = hi.min(r.len().saturating_sub(2));
    let mut tau = lo;
    while tau <= hi {
        if r[tau] > r[tau - 1] {
            // leftmost sample of a plateau counts if the plateau then falls
            let mut end = tau;
            while end + 1 < r.len() && r[end + 1] == r[tau] {
                end += 1;
            }
            if end + 1 < r.len() && r[end + 1] < r[tau] && r[tau] >= cfg.peak_floor {
                return Some(PitchCandidate {
                    imf_index,
                    lag: tau,
                    f0: fs / tau as f64,
                    acf_peak: r[tau],
                });
            }
            tau = end + 1;
        } else {
            tau += 1;
        }
    }
    None
}

/// Picks the candidate with the largest normalised ACF peak; ties go to the
/// lower mode index.
pub fn select_f0(candidates: &[PitchCandidate]) -> Option<f64> {
    candidates
        .iter()
        .fold(None::<&PitchCandidate>, |best, c| match best {
            Some(b) if c.acf_peak > b.acf_peak || (c.acf_peak == b.acf_peak && c.imf_index < b.imf_index) => Some(c),
            Some(b) => Some(b),
            None => Some(c),
        })
        .map(|c| c.f0)
}

/// All candidates of one frame.
pub fn frame_candidates(frame: &[f64], fs: f64, cfg: &PitchConfig) -> Result<Vec<PitchCandidate>> {
    let dec = eemd_with(frame, &cfg.eemd, cfg.seed)?;
    Ok(instantaneous_amplitudes(&dec)
        .iter()
        .enumerate()
        .filter_map(|(k, a)| {
            amplitude_acf(a).and_then(|r| extract_candidate(&r, fs, k + 1, cfg))
        })
        .collect())
}

pub fn estimate_pitch_track(
    w: &Waveform,
    plan: &FramePlan,
    mask: &VoicedMask,
    cfg: &PitchConfig,
) -> Result<PitchTrack> {
    if mask.len() != plan.frame_count() {
        return Err(Error::Contract(format!(
            "mask has {} labels for {} frames",
            mask.len(),
            plan.frame_count()
        )));
    }
    let fs = w.sample_rate() as f64;
    let x = w.samples();
    let per_frame: Vec<Option<Vec<PitchCandidate>>> = (0..plan.frame_count())
        .into_par_iter()
        .map(|q| {
            if mask.is_voiced(q) {
                frame_candidates(&plan.frame(x, q), fs, cfg).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let mut frames: Vec<FramePitch> = per_frame
        .into_iter()
        .map(|c| match c {
            None => FramePitch {
                f0: None,
                source: PitchSource::Unvoiced,
                candidates: Vec::new(),
            },
            Some(candidates) => FramePitch {
                f0: select_f0(&candidates),
                source: PitchSource::Estimated,
                candidates,
            },
        })
        .collect();

    let found: Vec<f64> = frames
        .iter()
        .filter(|f| f.source == PitchSource::Estimated)
        .filter_map(|f| f.f0)
        .collect();
    if found.is_empty() {
        return Err(Error::PitchUnavailable(format!(
            "none of {} voiced frames produced a pitch candidate",
            mask.voiced_count()
        )));
    }
    let median = stats::median(&found);
    let mut previous = None;
    for f in frames.iter_mut() {
        if f.source == PitchSource::Unvoiced {
            continue;
        }
        match (f.f0, previous) {
            (Some(v), _) => previous = Some(v),
            (None, Some(p)) => {
                f.f0 = Some(p);
                f.source = PitchSource::CarriedForward;
            }
            (None, None) => {
                f.f0 = Some(median);
                f.source = PitchSource::Median;
            }
        }
    }
    Ok(PitchTrack {
        frames,
        frame_starts_secs: (0..plan.frame_count()).map(|q| plan.start_secs(q)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emd::emd;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    const FS: f64 = 16000.0;

    fn cand(k: usize, peak: f64, f0: f64) -> PitchCandidate {
        PitchCandidate { imf_index: k, lag: (FS / f0) as usize, f0, acf_peak: peak }
    }

    #[test]
    fn constant_envelope_of_cosine() {
        let x: Vec<f64> = (0..512).map(|t| (2.0 * PI * 1000.0 * t as f64 / FS).cos()).collect();
        let dec = ImfDecomposition { imfs: vec![x], residual: vec![0.0; 512], ensemble_size: 1, noise_std_ratio: 0.0 };
        let a = &instantaneous_amplitudes(&dec)[0];
        assert!(a.iter().all(|v| (v - 1.0).abs() < 0.02));
    }

    #[test]
    fn am_envelope_tracks_modulator() {
        let (x, env): (Vec<f64>, Vec<f64>) = (0..512)
            .map(|t| {
                let tt = t as f64 / FS;
                let m = 1.0 + 0.5 * (2.0 * PI * 100.0 * tt).cos();
                (m * (2.0 * PI * 1000.0 * tt).cos(), m)
            })
            .unzip();
        let dec = ImfDecomposition { imfs: vec![x, vec![0.0; 512]], residual: vec![0.0; 512], ensemble_size: 1, noise_std_ratio: 0.0 };
        let amps = instantaneous_amplitudes(&dec);
        let rms = (amps[0].iter().zip(&env).map(|(a, e)| (a - e).powi(2)).sum::<f64>() / 512.0).sqrt();
        assert!(rms < 0.05, "rms {rms}");
        assert!(amps[0].iter().all(|&v| v >= 0.0));
        assert!(amps[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn acf_of_periodic_envelope() {
        // one second: the (N - tau) taper of the biased estimate shifts the
        // peak by about -1/((N - tau) w^2) lags, negligible at this length
        let a: Vec<f64> = (0..16000).map(|t| 1.0 + (2.0 * PI * 100.0 * t as f64 / FS).cos()).collect();
        let r = amplitude_acf(&a).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        let c = extract_candidate(&r, FS, 1, &PitchConfig::default()).unwrap();
        assert_eq!(c.lag, 160);
        assert!((c.f0 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn acf_matches_direct_sum() {
        let a: Vec<f64> = (0..97).map(|t| ((t * 29) % 31) as f64).collect();
        let r = amplitude_acf(&a).unwrap();
        let m = a.iter().sum::<f64>() / 97.0;
        let c: Vec<f64> = a.iter().map(|v| v - m).collect();
        let r0: f64 = c.iter().map(|v| v * v).sum();
        for tau in 0..97 {
            let direct: f64 = (0..97 - tau).map(|t| c[t] * c[t + tau]).sum::<f64>() / r0;
            assert!((r[tau] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn white_noise_envelope_has_no_strong_peak() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let a: Vec<f64> = (0..512).map(|_| rng.random::<f64>()).collect();
        let r = amplitude_acf(&a).unwrap();
        let (lo, _) = PitchConfig::default().lag_range(FS);
        // 3 sigma for a biased ACF estimate of white noise: 3/sqrt(N)
        assert!(r[lo..].iter().all(|v| v.abs() < 0.2));
    }

    #[test]
    fn constant_envelope_flags_zero_variance() {
        assert!(amplitude_acf(&[0.7; 64]).is_none());
        assert!(amplitude_acf(&[]).is_none());
    }

    #[test]
    fn candidate_from_constructed_peaks() {
        let cfg = PitchConfig::default();
        let mut r = vec![0.0; 512];
        r[0] = 1.0;
        r[100] = 0.8;
        let c = extract_candidate(&r, FS, 2, &cfg).unwrap();
        assert_eq!((c.lag, c.imf_index), (100, 2));
        assert!((c.f0 - 160.0).abs() < 1e-9);

        // tau_min = floor(16000 / 400) = 40 is inside the range and wins
        assert_eq!(cfg.lag_range(FS), (40, 320));
        let mut r = vec![0.0; 512];
        r[0] = 1.0;
        r[40] = 0.5;
        r[160] = 0.9;
        let c = extract_candidate(&r, FS, 1, &cfg).unwrap();
        assert_eq!(c.lag, 40);
        assert!((c.f0 - 400.0).abs() < 1e-9);

        // a peak below tau_min is ignored
        let mut r = vec![0.0; 512];
        r[39] = 0.9;
        r[160] = 0.6;
        assert_eq!(extract_candidate(&r, FS, 1, &cfg).unwrap().lag, 160);

        let mut r = vec![0.1; 512];
        r[0] = 1.0;
        r[200] = 0.29;
        assert!(extract_candidate(&r, FS, 1, &cfg).is_none());
    }

    #[test]
    fn plateau_takes_leftmost() {
        let mut r = vec![0.0; 512];
        r[120] = 0.7;
        r[121] = 0.7;
        r[122] = 0.7;
        assert_eq!(extract_candidate(&r, FS, 1, &PitchConfig::default()).unwrap().lag, 120);
    }

    #[test]
    fn selection_rule() {
        assert_eq!(select_f0(&[cand(1, 0.5, 120.0)]), Some(120.0));
        assert_eq!(select_f0(&[cand(1, 0.6, 240.0), cand(2, 0.9, 120.0)]), Some(120.0));
        assert_eq!(select_f0(&[cand(3, 0.9, 200.0), cand(2, 0.9, 120.0)]), Some(120.0));
        assert_eq!(select_f0(&[]), None);
    }

    fn harmonic_frame(f0: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|t| {
                let tt = t as f64 / FS + phase;
                (1..=10).map(|h| (2.0 * PI * f0 * h as f64 * tt).sin() / h as f64).sum()
            })
            .collect()
    }

    #[test]
    fn selection_is_scale_invariant() {
        let cfg = PitchConfig { eemd: EemdConfig { ensemble_size: 10, ..EemdConfig::default() }, ..PitchConfig::default() };
        let x = harmonic_frame(150.0, 512, 0.0013);
        let a = frame_candidates(&x, FS, &cfg).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 37.5).collect();
        let b = frame_candidates(&scaled, FS, &cfg).unwrap();
        assert_eq!(select_f0(&a), select_f0(&b));
    }

    #[test]
    fn plain_emd_envelopes_reveal_f0() {
        let x = harmonic_frame(125.0, 512, 0.0);
        let dec = emd(&x).unwrap();
        let cfg = PitchConfig::default();
        let cands: Vec<_> = instantaneous_amplitudes(&dec)
            .iter()
            .enumerate()
            .filter_map(|(k, a)| amplitude_acf(a).and_then(|r| extract_candidate(&r, FS, k + 1, &cfg)))
            .collect();
        let f0 = select_f0(&cands).unwrap();
        assert!((f0 - 125.0).abs() / 125.0 < 0.2, "f0 {f0}");
    }

    #[test]
    fn track_on_synthetic_vowel() {
        let n = 16000;
        let x = harmonic_frame(120.0, n, 0.0);
        let w = Waveform::new(x.iter().map(|v| v * 0.3).collect(), 16000).unwrap();
        let plan = w.plan_frames();
        let mask = VoicedMask::all_voiced(plan.frame_count());
        let cfg = PitchConfig { eemd: EemdConfig { ensemble_size: 10, ..EemdConfig::default() }, ..PitchConfig::default() };
        let track = estimate_pitch_track(&w, &plan, &mask, &cfg).unwrap();
        let good = track.estimates().filter(|f| (f - 120.0).abs() <= 0.2 * 120.0).count();
        assert!(good * 10 >= 8 * track.len(), "{good} of {}", track.len());
        assert!(track.estimates().all(|f| (50.0..=400.0).contains(&f)));

        // deterministic given the seed
        assert_eq!(track, estimate_pitch_track(&w, &plan, &mask, &cfg).unwrap());
        assert!(track.to_csv().starts_with("frame_index,start_sec,voiced,f0_hz\n0,0.0000,1,"));
    }

    #[test]
    fn unvoiced_mask_is_pitch_unavailable() {
        let w = Waveform::new(harmonic_frame(120.0, 4000, 0.0), 16000).unwrap();
        let plan = w.plan_frames();
        let r = estimate_pitch_track(&w, &plan, &VoicedMask::all_unvoiced(plan.frame_count()), &PitchConfig::default());
        assert!(matches!(r, Err(Error::PitchUnavailable(_))));
    }

    #[test]
    fn one_hop_shift_permutes_estimates() {
        let x = harmonic_frame(180.0, 6000, 0.0);
        let cfg = PitchConfig { eemd: EemdConfig { ensemble_size: 6, ..EemdConfig::default() }, ..PitchConfig::default() };
        let a = Waveform::new(x.clone(), 16000).unwrap();
        let b = Waveform::new(x[256..].to_vec(), 16000).unwrap();
        let (pa, pb) = (a.plan_frames(), b.plan_frames());
        let ta = estimate_pitch_track(&a, &pa, &VoicedMask::all_voiced(pa.frame_count()), &cfg).unwrap();
        let tb = estimate_pitch_track(&b, &pb, &VoicedMask::all_voiced(pb.frame_count()), &cfg).unwrap();
        // interior frames: frame q+1 of the original is frame q of the shifted copy
        for q in 0..pb.frame_count() - 2 {
            assert_eq!(ta.frames[q + 1].candidates, tb.frames[q].candidates, "frame {q}");
        }
    }

    #[test]
    fn fallback_fill() {
        // voiced frames of silence produce no candidates and inherit values
        let mut x = harmonic_frame(200.0, 4096, 0.0);
        x[2048..].iter_mut().for_each(|v| *v = 0.0);
        let w = Waveform::new(x, 16000).unwrap();
        let plan = w.plan_frames();
        let cfg = PitchConfig { eemd: EemdConfig { ensemble_size: 4, ..EemdConfig::default() }, ..PitchConfig::default() };
        let track = estimate_pitch_track(&w, &plan, &VoicedMask::all_voiced(plan.frame_count()), &cfg).unwrap();
        let last = track.frames.last().unwrap();
        assert_eq!(last.source, PitchSource::CarriedForward);
        assert!(last.f0.is_some());
        assert!(track.frames.iter().all(|f| f.f0.is_some()));
    }
}
