use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use isetk_core::audio::{
    detect_vuv, load_vuv_labels, load_wav, mix_at_snr, write_wav, MaskSource, MixSpec, NoiseOffset, VoicedMask,
    Waveform,
};
use isetk_core::calibrate::{calibrate_gains, CalibrationConfig};
use isetk_core::enhance::{enhance_utterance, EnhancementConfig, EnhancementMetadata, GainProfile};
use isetk_core::experiment::{
    check_paths, load_training_items, parse_eval_manifest, parse_training_manifest, run_evaluation, write_reports,
    ExperimentConfig, PesqHook,
};
use isetk_core::pitch::{estimate_pitch_track, PitchTrack};
use isetk_core::{stats, synth, Error};

use crate::config::Settings;
use crate::{CalibrateArgs, EnhanceArgs, EvaluateArgs, MixArgs, PitchArgs, SynthArgs};

/// Largest deviation accepted by `--verify-identity`.
const IDENTITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) if e.is_io() || matches!(e, Error::LabelsIncomplete(_)) => 2,
            CliError::Core(e) if e.is_pipeline() => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Result of a command that ran to completion. `Failed` means outputs were
/// written but the run must still report a non-zero status.
#[derive(Debug)]
pub enum Outcome {
    Done,
    Failed { code: u8, message: String },
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialise");
    write_text(path, &(text + "\n"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// A builtin profile name or a JSON file holding `{"name", "gains"}`.
fn load_profile(spec: &str) -> Result<GainProfile, CliError> {
    if let Some(p) = GainProfile::builtin(spec, 10) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "unknown profile `{spec}` (expected ise_asd, gtf_f0, unit or a JSON file)"
        )));
    }
    let profile: GainProfile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Core(Error::Parse { what: "profile".into(), reason: e.to_string() }))?;
    profile.validate()?;
    Ok(profile)
}

fn voicing(input: &Waveform, labels: Option<&Path>) -> Result<VoicedMask, CliError> {
    let plan = input.plan_frames();
    Ok(match labels {
        Some(p) => load_vuv_labels(p, &plan)?,
        None => detect_vuv(input, &plan),
    })
}

#[derive(Serialize)]
struct MixSidecar<'a> {
    clean: &'a Path,
    noise: &'a Path,
    seed: u64,
    target_snr_db: f64,
    achieved_snr_db: f64,
    alpha: f64,
    offset: usize,
    looped: bool,
    scale_factor: f64,
}

pub fn mix(a: &MixArgs, s: &Settings) -> Result<Outcome, CliError> {
    let clean = load_wav(&a.clean)?;
    let noise = load_wav(&a.noise)?;
    let offset = match a.offset {
        Some(o) => NoiseOffset::Fixed(o),
        None => NoiseOffset::Random { seed: s.seed },
    };
    let spec = MixSpec {
        target_snr_db: a.snr,
        noise,
        offset,
    };
    let mut result = mix_at_snr(&clean, &spec)?;
    let scale_factor = result.mixture.limit_peak();
    write_wav(&a.out, &result.mixture)?;
    write_json(
        &a.out.with_extension("json"),
        &MixSidecar {
            clean: &a.clean,
            noise: &a.noise,
            seed: s.seed,
            target_snr_db: result.target_snr_db,
            achieved_snr_db: result.achieved_snr_db,
            alpha: result.alpha,
            offset: result.offset,
            looped: result.looped,
            scale_factor,
        },
    )?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct PitchStats {
    voiced_frames: usize,
    estimated_frames: usize,
    fallback_frames: usize,
    median_f0_hz: Option<f64>,
}

impl PitchStats {
    fn of(track: Option<&PitchTrack>, mask: &VoicedMask) -> Self {
        let estimates: Vec<f64> = track.map(|t| t.estimates().collect()).unwrap_or_default();
        let fallback = track.map_or(0, PitchTrack::fallback_count);
        Self {
            voiced_frames: mask.voiced_count(),
            estimated_frames: estimates.len() - fallback,
            fallback_frames: fallback,
            median_f0_hz: (!estimates.is_empty()).then(|| stats::median(&estimates)),
        }
    }
}

#[derive(Serialize)]
struct EnhanceReport<'a> {
    input: &'a Path,
    output: &'a Path,
    voicing: MaskSource,
    pitch: PitchStats,
    #[serde(flatten)]
    enhancement: EnhancementMetadata,
    identity_max_error: Option<f64>,
}

pub fn enhance(a: &EnhanceArgs, s: &Settings) -> Result<Outcome, CliError> {
    let input = load_wav(&a.input)?;
    let profile = match a.profile.as_deref().or(s.profile.as_deref()) {
        Some(spec) => load_profile(spec)?,
        None => GainProfile::ise_asd(),
    };
    let cfg = EnhancementConfig {
        gain_profile: profile,
        ..s.enhancement.clone()
    };
    let mask = voicing(&input, a.vuv.as_deref())?;
    let metadata_path = a.metadata.clone().unwrap_or_else(|| a.out.with_extension("json"));

    let track = match estimate_pitch_track(&input, &input.plan_frames(), &mask, &cfg.pitch) {
        Ok(t) => t,
        Err(Error::PitchUnavailable(why)) => {
            let warning = format!("{why}; input copied through unmodified");
            write_wav(&a.out, &input)?;
            let metadata = EnhancementMetadata {
                profile: cfg.gain_profile.clone(),
                frames: mask.len(),
                voiced_frames: mask.voiced_count(),
                enhanced_frames: 0,
                pitch_fallback_frames: 0,
                clamps: Vec::new(),
                warnings: vec![warning.clone()],
                scale_factor: 1.0,
            };
            write_json(
                &metadata_path,
                &EnhanceReport {
                    input: &a.input,
                    output: &a.out,
                    voicing: mask.source(),
                    pitch: PitchStats::of(None, &mask),
                    enhancement: metadata,
                    identity_max_error: None,
                },
            )?;
            return Ok(Outcome::Failed { code: 3, message: warning });
        }
        Err(e) => return Err(e.into()),
    };

    let mut out = enhance_utterance(&input, &mask, &track, &cfg)?;
    let identity_max_error = a.verify_identity.then(|| {
        let edge = input.plan_frames().frame_length();
        let end = input.len().saturating_sub(edge);
        (edge..end)
            .map(|t| (out.waveform.samples()[t] - input.samples()[t]).abs())
            .fold(0.0, f64::max)
    });
    out.limit_peak();
    write_wav(&a.out, &out.waveform)?;
    write_json(
        &metadata_path,
        &EnhanceReport {
            input: &a.input,
            output: &a.out,
            voicing: mask.source(),
            pitch: PitchStats::of(Some(&track), &mask),
            enhancement: out.metadata,
            identity_max_error,
        },
    )?;
    match identity_max_error {
        Some(err) if err >= IDENTITY_TOLERANCE => Ok(Outcome::Failed {
            code: 3,
            message: format!("identity check failed: max interior deviation {err:.3e}"),
        }),
        Some(err) => {
            println!("identity verified: max interior deviation {err:.3e}");
            Ok(Outcome::Done)
        }
        None => Ok(Outcome::Done),
    }
}

pub fn pitch(a: &PitchArgs, s: &Settings) -> Result<Outcome, CliError> {
    let input = load_wav(&a.input)?;
    let mask = voicing(&input, a.vuv.as_deref())?;
    let track = estimate_pitch_track(&input, &input.plan_frames(), &mask, &s.enhancement.pitch)?;
    write_text(&a.out, &track.to_csv())?;
    Ok(Outcome::Done)
}

pub fn evaluate(a: &EvaluateArgs, s: &Settings) -> Result<Outcome, CliError> {
    let rows = parse_eval_manifest(&read_text(&a.manifest)?, &base_dir(&a.manifest))?;
    check_paths(&rows)?;
    let mut cfg = ExperimentConfig {
        seed: s.seed,
        enhancement: s.enhancement.clone(),
        pesq: s.pesq_command.clone().map(|command| PesqHook { command }),
        ..ExperimentConfig::default()
    };
    if let Some(p) = &a.profile {
        cfg.ise_asd_profile = load_profile(&p.to_string_lossy())?;
    }
    let outcome = run_evaluation(&rows, &cfg);
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let paths = write_reports(&a.out_dir, &outcome)?;
    println!(
        "{} records written to {}",
        outcome.records.len(),
        paths.records.display()
    );
    if outcome.failures.is_empty() {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Failed {
            code: 4,
            message: format!(
                "{} of {} manifest rows failed; see {}",
                outcome.failures.len(),
                rows.len(),
                paths.failures.display()
            ),
        })
    }
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    seed: u64,
    harmonics: usize,
    items: usize,
    skipped_items: &'a [String],
    unit_mean_estoi: f64,
    final_mean_estoi: f64,
    gains: &'a [f64],
}

pub fn calibrate(a: &CalibrateArgs, s: &Settings) -> Result<Outcome, CliError> {
    if a.harmonics == 0 {
        return Err(CliError::Usage("--harmonics must be at least 1".into()));
    }
    let rows = parse_training_manifest(&read_text(&a.manifest)?, &base_dir(&a.manifest))?;
    let items = load_training_items(&rows, s.seed)?;
    let cfg = CalibrationConfig {
        harmonics: a.harmonics,
        pitch: s.enhancement.pitch,
        gammatone: s.enhancement.gammatone,
        ..CalibrationConfig::default()
    };
    let run = calibrate_gains(&items, &cfg)?;
    write_text(&a.out_dir.join("profile.json"), &run.profile_json())?;
    write_text(&a.out_dir.join("traces.csv"), &run.traces_to_csv())?;
    write_json(
        &a.out_dir.join("calibration.json"),
        &CalibrationSummary {
            seed: s.seed,
            harmonics: a.harmonics,
            items: run.items,
            skipped_items: &run.skipped_items,
            unit_mean_estoi: run.unit_mean_estoi,
            final_mean_estoi: run.final_mean_estoi,
            gains: &run.profile.gains,
        },
    )?;
    println!("gains: {:?}", run.profile.gains);
    Ok(Outcome::Done)
}

/// SNRs of the generated training manifest.
const TRAINING_SNRS: [f64; 3] = [-5.0, 0.0, 5.0];

pub fn synth(a: &SynthArgs, s: &Settings) -> Result<Outcome, CliError> {
    if a.count == 0 || a.secs.is_nan() || a.secs <= 0.5 {
        return Err(CliError::Usage("need --count >= 1 and --secs > 0.5".into()));
    }
    let corpus = synth::write_corpus(&a.out_dir, a.count, s.seed, a.sample_rate, a.secs)?;
    let name = |p: &Path| p.file_name().expect("corpus files have names").to_string_lossy().into_owned();
    let noise = name(&corpus.noise);
    let mut manifest = String::from("clean_path,vuv_path,noise_path,snr_db,methods\n");
    let mut training = String::from("clean_path,noise_path,snr_db\n");
    for u in &corpus.utterances {
        for snr in &a.snr {
            manifest.push_str(&format!(
                "{},{},{noise},{snr},unprocessed;gtf_f0;ise_asd\n",
                name(&u.wav),
                name(&u.labels)
            ));
        }
        for snr in TRAINING_SNRS {
            training.push_str(&format!("{},{noise},{snr}\n", name(&u.wav)));
        }
    }
    write_text(&a.out_dir.join("manifest.csv"), &manifest)?;
    write_text(&a.out_dir.join("training.csv"), &training)?;
    write_json(&a.out_dir.join("corpus.json"), &corpus)?;
    println!("{} utterances written to {}", corpus.utterances.len(), a.out_dir.display());
    Ok(Outcome::Done)
}
