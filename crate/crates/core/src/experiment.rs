//! Batch evaluation: manifest parsing, per-cell mixing, enhancement and
//! scoring, and deterministic report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{
    detect_vuv, load_vuv_labels, load_wav, mix_at_snr, write_wav, MixSpec, NoiseOffset, VoicedMask, Waveform,
};
use crate::calibrate::TrainingItem;
use crate::enhance::{enhance_utterance, EnhancementConfig, GainProfile};
use crate::error::{Error, Result};
use crate::metrics::{
    anova_rows, anova_to_csv, records_to_csv, sti_category, summarize, summary_to_csv, EstoiConfig, EstoiReference,
    EvalRecord,
};
use crate::pitch::{estimate_pitch_track, PitchTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unprocessed,
    GtfF0,
    IseAsd,
    Unit,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Unprocessed, Method::GtfF0, Method::IseAsd, Method::Unit];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Unprocessed => "unprocessed",
            Method::GtfF0 => "gtf_f0",
            Method::IseAsd => "ise_asd",
            Method::Unit => "unit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::parse("method", format!("unknown method `{s}`")))
    }
}

/// One manifest line: a clean utterance mixed with a noise at an SNR and
/// scored under each listed method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    pub clean_path: PathBuf,
    pub vuv_path: Option<PathBuf>,
    pub noise_path: PathBuf,
    pub snr_db: f64,
    pub methods: Vec<Method>,
}

impl ManifestRow {
    pub fn utterance(&self) -> String {
        stem(&self.clean_path)
    }

    pub fn noise(&self) -> String {
        stem(&self.noise_path)
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Deserialize)]
struct RawEvalRow {
    clean_path: String,
    #[serde(default)]
    vuv_path: String,
    noise_path: String,
    snr_db: f64,
    methods: String,
}

/// Parses `clean_path,vuv_path,noise_path,snr_db,methods` (methods separated
/// by `;`). Relative paths are resolved against `base`.
pub fn parse_eval_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RawEvalRow>().enumerate() {
        let raw = rec.map_err(|e| Error::parse("manifest", format!("row {}: {e}", i + 1)))?;
        let methods = raw
            .methods
            .split(';')
            .filter(|m| !m.trim().is_empty())
            .map(Method::from_str)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse("manifest", format!("row {}: {e}", i + 1)))?;
        if methods.is_empty() {
            return Err(Error::parse("manifest", format!("row {}: no methods", i + 1)));
        }
        if !raw.snr_db.is_finite() {
            return Err(Error::parse("manifest", format!("row {}: SNR must be finite", i + 1)));
        }
        rows.push(ManifestRow {
            clean_path: resolve(base, &raw.clean_path),
            vuv_path: (!raw.vuv_path.trim().is_empty()).then(|| resolve(base, &raw.vuv_path)),
            noise_path: resolve(base, &raw.noise_path),
            snr_db: raw.snr_db,
            methods,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse("manifest", "no rows"));
    }
    Ok(rows)
}

/// Fails with the first path that does not exist.
pub fn check_paths(rows: &[ManifestRow]) -> Result<()> {
    for r in rows {
        for p in [Some(&r.clean_path), r.vuv_path.as_ref(), Some(&r.noise_path)].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub clean_path: PathBuf,
    pub noise_path: PathBuf,
    pub snr_db: f64,
}

/// Parses `clean_path,noise_path,snr_db`.
pub fn parse_training_manifest(text: &str, base: &Path) -> Result<Vec<TrainingRow>> {
    #[derive(Deserialize)]
    struct Raw {
        clean_path: String,
        noise_path: String,
        snr_db: f64,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader
        .deserialize::<Raw>()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| Error::parse("training manifest", format!("row {}: {e}", i + 1)))?;
            Ok(TrainingRow {
                clean_path: resolve(base, &r.clean_path),
                noise_path: resolve(base, &r.noise_path),
                snr_db: r.snr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::parse("training manifest", "no rows"));
    }
    Ok(rows)
}

/// Seed for manifest row `index`: a SplitMix64 step, so neighbouring rows
/// receive unrelated noise offsets.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Voicing labels from `labels` when given, else a sibling `.vuv` file of the
/// clean utterance, else the detector run on the clean reference.
pub fn reference_mask(clean_path: &Path, labels: Option<&Path>, clean: &Waveform) -> Result<VoicedMask> {
    let plan = clean.plan_frames();
    let sibling = clean_path.with_extension("vuv");
    match labels {
        Some(p) => load_vuv_labels(p, &plan),
        None if sibling.exists() => load_vuv_labels(&sibling, &plan),
        None => Ok(detect_vuv(clean, &plan)),
    }
}

fn mix_cell(clean: &Waveform, noise_path: &Path, snr_db: f64, seed: u64) -> Result<Waveform> {
    let noise = load_wav(noise_path)?;
    let spec = MixSpec {
        target_snr_db: snr_db,
        noise,
        offset: NoiseOffset::Random { seed },
    };
    Ok(mix_at_snr(clean, &spec)?.mixture)
}

/// Loads and mixes the training set; row `i` uses [`cell_seed`]`(seed, i)`.
pub fn load_training_items(rows: &[TrainingRow], seed: u64) -> Result<Vec<TrainingItem>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let clean = load_wav(&r.clean_path)?;
            let mask = reference_mask(&r.clean_path, None, &clean)?;
            let noisy = mix_cell(&clean, &r.noise_path, r.snr_db, cell_seed(seed, i))?;
            Ok(TrainingItem {
                id: format!("{}@{}:{}", stem(&r.clean_path), stem(&r.noise_path), r.snr_db),
                clean,
                noisy,
                mask,
            })
        })
        .collect()
}

/// External PESQ scorer invoked as `command <clean.wav> <degraded.wav>`; the
/// last number printed on stdout is taken as the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesqHook {
    pub command: PathBuf,
}

impl PesqHook {
    pub fn score(&self, clean: &Waveform, degraded: &Waveform) -> Result<f64> {
        let dir = std::env::temp_dir().join(format!("isetk-pesq-{}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let tag = format!("{:?}", std::thread::current().id()).replace(|c: char| !c.is_ascii_alphanumeric(), "");
        let (a, b) = (dir.join(format!("ref{tag}.wav")), dir.join(format!("deg{tag}.wav")));
        write_wav(&a, clean)?;
        let mut limited = degraded.clone();
        limited.limit_peak();
        write_wav(&b, &limited)?;
        let out = Command::new(&self.command)
            .arg(&a)
            .arg(&b)
            .output()
            .map_err(|e| Error::io(&self.command, e))?;
        let text = String::from_utf8_lossy(&out.stdout);
        text.split(|c: char| c.is_whitespace() || c == ',' || c == '=' || c == ':')
            .filter_map(|t| t.parse::<f64>().ok())
            .next_back()
            .ok_or_else(|| Error::parse("PESQ output", text.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Pitch and filter settings shared by every enhancing method.
    pub enhancement: EnhancementConfig,
    pub ise_asd_profile: GainProfile,
    pub gtf_f0_profile: GainProfile,
    pub unit_harmonics: usize,
    pub pesq: Option<PesqHook>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            enhancement: EnhancementConfig::default(),
            ise_asd_profile: GainProfile::ise_asd(),
            gtf_f0_profile: GainProfile::gtf_f0(),
            unit_harmonics: 10,
            pesq: None,
        }
    }
}

impl ExperimentConfig {
    pub fn profile(&self, m: Method) -> Option<GainProfile> {
        match m {
            Method::Unprocessed => None,
            Method::GtfF0 => Some(self.gtf_f0_profile.clone()),
            Method::IseAsd => Some(self.ise_asd_profile.clone()),
            Method::Unit => Some(GainProfile::unit(self.unit_harmonics)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub row: usize,
    pub utterance: String,
    pub noise: String,
    pub snr_db: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvaluationOutcome {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

struct CellResult {
    records: Vec<EvalRecord>,
    warnings: Vec<String>,
}

fn evaluate_cell(index: usize, row: &ManifestRow, cfg: &ExperimentConfig) -> Result<CellResult> {
    let clean = load_wav(&row.clean_path)?;
    let mask = reference_mask(&row.clean_path, row.vuv_path.as_deref(), &clean)?;
    let noisy = mix_cell(&clean, &row.noise_path, row.snr_db, cell_seed(cfg.seed, index))?;
    let reference = EstoiReference::new(&clean, EstoiConfig::default());
    let base = reference.score(&noisy)?;
    let mut warnings = Vec::new();

    let needs_pitch = row.methods.iter().any(|&m| m != Method::Unprocessed);
    let mut pitch_cfg = cfg.enhancement.pitch;
    pitch_cfg.seed = cfg.seed;
    let track: Option<PitchTrack> = if needs_pitch {
        match estimate_pitch_track(&noisy, &noisy.plan_frames(), &mask, &pitch_cfg) {
            Ok(t) => Some(t),
            Err(Error::PitchUnavailable(why)) => {
                warnings.push(format!("row {}: {why}; enhanced methods left the input unmodified", index + 1));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut records = Vec::with_capacity(row.methods.len());
    for &m in &row.methods {
        let output = match (cfg.profile(m), &track) {
            (Some(profile), Some(track)) => {
                let ecfg = EnhancementConfig {
                    gain_profile: profile,
                    pitch: pitch_cfg,
                    gammatone: cfg.enhancement.gammatone,
                };
                let out = enhance_utterance(&noisy, &mask, track, &ecfg)?;
                warnings.extend(out.metadata.warnings.iter().map(|w| format!("row {} {m}: {w}", index + 1)));
                out.waveform
            }
            _ => noisy.clone(),
        };
        let estoi = if m == Method::Unprocessed { base } else { reference.score(&output)? };
        let pesq = match &cfg.pesq {
            Some(hook) => Some(hook.score(&clean, &output)?),
            None => None,
        };
        records.push(EvalRecord {
            utterance: row.utterance(),
            noise: row.noise(),
            snr_db: row.snr_db,
            method: m.to_string(),
            estoi,
            delta_estoi: estoi - base,
            sti_category: sti_category(estoi),
            pesq,
        });
    }
    Ok(CellResult { records, warnings })
}

/// Evaluates every manifest row. A failing row is recorded and skipped; the
/// output order follows the manifest regardless of scheduling.
pub fn run_evaluation(rows: &[ManifestRow], cfg: &ExperimentConfig) -> EvaluationOutcome {
    let results: Vec<Result<CellResult>> =
        rows.par_iter().enumerate().map(|(i, row)| evaluate_cell(i, row, cfg)).collect();
    let mut outcome = EvaluationOutcome::default();
    for (i, (row, res)) in rows.iter().zip(results).enumerate() {
        match res {
            Ok(cell) => {
                outcome.records.extend(cell.records);
                outcome.warnings.extend(cell.warnings);
            }
            Err(e) => {
                log::error!("row {}: {e}", i + 1);
                outcome.failures.push(CellFailure {
                    row: i + 1,
                    utterance: row.utterance(),
                    noise: row.noise(),
                    snr_db: row.snr_db,
                    error: e.to_string(),
                });
            }
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportPaths {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub anova: PathBuf,
    pub failures: PathBuf,
}

pub fn failures_to_csv(failures: &[CellFailure]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "utterance", "noise", "snr_db", "error"]).expect("in-memory write");
    for f in failures {
        w.write_record([f.row.to_string(), f.utterance.clone(), f.noise.clone(), f.snr_db.to_string(), f.error.clone()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

/// Writes `records.csv`, `summary.csv`, `anova.csv` and `failures.csv`.
pub fn write_reports(out_dir: &Path, outcome: &EvaluationOutcome) -> Result<ReportPaths> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = ReportPaths {
        records: out_dir.join("records.csv"),
        summary: out_dir.join("summary.csv"),
        anova: out_dir.join("anova.csv"),
        failures: out_dir.join("failures.csv"),
    };
    let files = [
        (&paths.records, records_to_csv(&outcome.records)),
        (&paths.summary, summary_to_csv(&summarize(&outcome.records))),
        (&paths.anova, anova_to_csv(&anova_rows(&outcome.records))),
        (&paths.failures, failures_to_csv(&outcome.failures)),
    ];
    for (p, text) in files {
        std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::write_corpus;

    #[test]
    fn methods_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!(" ISE_ASD ".parse::<Method>().unwrap(), Method::IseAsd);
        assert!("apes_harm".parse::<Method>().is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "clean_path,vuv_path,noise_path,snr_db,methods\n\
                    a.wav,a.vuv,n.wav,-5,unprocessed;ise_asd\n\
                    # comment\n\
                    /abs/b.wav,,n.wav,0,unit\n";
        let rows = parse_eval_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].clean_path, PathBuf::from("/data/a.wav"));
        assert_eq!(rows[0].vuv_path, Some(PathBuf::from("/data/a.vuv")));
        assert_eq!(rows[0].methods, vec![Method::Unprocessed, Method::IseAsd]);
        assert_eq!(rows[1].clean_path, PathBuf::from("/abs/b.wav"));
        assert_eq!(rows[1].vuv_path, None);
        assert_eq!(rows[1].snr_db, 0.0);
        assert!(parse_eval_manifest("clean_path,vuv_path,noise_path,snr_db,methods\na,,n,x,unit\n", Path::new(".")).is_err());
        assert!(parse_eval_manifest("clean_path,vuv_path,noise_path,snr_db,methods\na,,n,0,magic\n", Path::new(".")).is_err());
        assert!(parse_eval_manifest("clean_path,vuv_path,noise_path,snr_db,methods\n", Path::new(".")).is_err());

        let t = parse_training_manifest("clean_path,noise_path,snr_db\nx.wav,n.wav,5\n", Path::new("d")).unwrap();
        assert_eq!(t[0].clean_path, PathBuf::from("d/x.wav"));
    }

    #[test]
    fn cell_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..100).map(|i| cell_seed(7, i)).collect();
        assert_eq!(s.len(), 100);
        assert_eq!(cell_seed(7, 3), cell_seed(7, 3));
        assert_ne!(cell_seed(7, 3), cell_seed(8, 3));
    }

    #[test]
    fn unit_cells_have_zero_delta_and_failures_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write_corpus(dir.path(), 1, 2, 16000, 1.5).unwrap();
        let u = &corpus.utterances[0];
        let rows = vec![
            ManifestRow {
                clean_path: u.wav.clone(),
                vuv_path: Some(u.labels.clone()),
                noise_path: corpus.noise.clone(),
                snr_db: 0.0,
                methods: vec![Method::Unprocessed, Method::Unit],
            },
            ManifestRow {
                clean_path: dir.path().join("missing.wav"),
                vuv_path: None,
                noise_path: corpus.noise.clone(),
                snr_db: 0.0,
                methods: vec![Method::Unprocessed],
            },
        ];
        let mut cfg = ExperimentConfig::default();
        cfg.enhancement.pitch.eemd.ensemble_size = 4;
        let out = run_evaluation(&rows, &cfg);
        assert_eq!(out.records.len(), 2);
        assert!(out.records.iter().all(|r| r.delta_estoi.abs() < 1e-6));
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].row, 2);
        assert!(check_paths(&rows).is_err());

        let paths = write_reports(&dir.path().join("out"), &out).unwrap();
        let failures = std::fs::read_to_string(paths.failures).unwrap();
        assert!(failures.starts_with("row,utterance,noise,snr_db,error\n2,missing,ssn,0,"));
        assert!(std::fs::read_to_string(paths.records).unwrap().lines().count() == 3);
    }
}
