use std::path::Path;

use serde::Serialize;

use super::{FramePlan, Waveform};
use crate::error::{Error, Result};

/// Detector threshold: a voiced frame's RMS must exceed this fraction of the
/// median RMS over active frames.
pub const DETECTOR_RMS_RATIO: f64 = 0.3;
/// Detector threshold: voiced frames cross zero in fewer than this fraction of
/// sample steps.
pub const DETECTOR_ZCR_MAX: f64 = 0.25;
/// Frames more than this far below the loudest frame do not count as active.
const DETECTOR_ACTIVE_DB: f64 = -60.0;
/// Largest tolerated hole between consecutive label regions.
const LABEL_GAP_TOLERANCE_SECS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    ExternalFile,
    Detector,
    Synthetic,
}

/// Per-frame voiced/unvoiced labels. Voiced frames form the set that gets
/// enhanced; everything else passes through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoicedMask {
    voiced: Vec<bool>,
    source: MaskSource,
}

impl VoicedMask {
    pub fn new(voiced: Vec<bool>, source: MaskSource) -> Self {
        Self { voiced, source }
    }

    pub fn all_voiced(frames: usize) -> Self {
        Self::new(vec![true; frames], MaskSource::Synthetic)
    }

    pub fn all_unvoiced(frames: usize) -> Self {
        Self::new(vec![false; frames], MaskSource::Synthetic)
    }

    pub fn len(&self) -> usize {
        self.voiced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voiced.is_empty()
    }

    pub fn is_voiced(&self, q: usize) -> bool {
        self.voiced[q]
    }

    pub fn labels(&self) -> &[bool] {
        &self.voiced
    }

    pub fn source(&self) -> MaskSource {
        self.source
    }

    pub fn voiced_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.voiced.iter().enumerate().filter(|(_, &v)| v).map(|(q, _)| q)
    }

    pub fn unvoiced_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.voiced.iter().enumerate().filter(|(_, &v)| !v).map(|(q, _)| q)
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }
}

/// One line of a label file: `start_sec end_sec V|U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRegion {
    pub start: f64,
    pub end: f64,
    pub voiced: bool,
}

pub fn parse_vuv_labels(text: &str) -> Result<Vec<LabelRegion>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| Error::parse("label file", format!("line {}: {why}", lineno + 1));
        let mut it = line.split_whitespace();
        let (Some(s), Some(e), Some(tag), None) = (it.next(), it.next(), it.next(), it.next())
        else {
            return Err(bad("expected `start end V|U`"));
        };
        let start: f64 = s.parse().map_err(|_| bad("bad start time"))?;
        let end: f64 = e.parse().map_err(|_| bad("bad end time"))?;
        let voiced = match tag {
            "V" | "v" => true,
            "U" | "u" => false,
            _ => return Err(bad("tag must be V or U")),
        };
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || end <= start {
            return Err(bad("region must satisfy 0 <= start < end"));
        }
        out.push(LabelRegion { start, end, voiced });
    }
    Ok(out)
}

/// Inverse of [`parse_vuv_labels`], with times to the microsecond.
pub fn format_vuv_labels(regions: &[LabelRegion]) -> String {
    regions
        .iter()
        .map(|r| format!("{:.6} {:.6} {}\n", r.start, r.end, if r.voiced { "V" } else { "U" }))
        .collect()
}

/// Reads a label file and maps it onto `plan`; a frame is voiced when more
/// than half of its samples lie inside voiced regions.
pub fn load_vuv_labels(path: impl AsRef<Path>, plan: &FramePlan) -> Result<VoicedMask> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    labels_to_mask(&parse_vuv_labels(&text)?, plan)
}

pub fn labels_to_mask(regions: &[LabelRegion], plan: &FramePlan) -> Result<VoicedMask> {
    let fs = plan.sample_rate() as f64;
    let duration = plan.signal_len() as f64 / fs;
    check_coverage(regions, duration)?;

    let n = plan.signal_len();
    let mut voiced = vec![false; n];
    for r in regions.iter().filter(|r| r.voiced) {
        let a = ((r.start * fs).round() as usize).min(n);
        let b = ((r.end * fs).round() as usize).min(n);
        voiced[a..b].iter_mut().for_each(|v| *v = true);
    }
    let mut prefix = vec![0usize; n + 1];
    for t in 0..n {
        prefix[t + 1] = prefix[t] + voiced[t] as usize;
    }
    let len = plan.frame_length();
    let labels = plan
        .starts()
        .iter()
        .map(|&s| {
            let a = s.min(n);
            let b = (s + len).min(n);
            2 * (prefix[b] - prefix[a]) > len
        })
        .collect();
    Ok(VoicedMask::new(labels, MaskSource::ExternalFile))
}

fn check_coverage(regions: &[LabelRegion], duration: f64) -> Result<()> {
    if regions.is_empty() {
        return Err(Error::LabelsIncomplete("label file has no regions".into()));
    }
    let mut sorted = regions.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut covered = 0.0f64;
    for r in &sorted {
        if r.start > covered + LABEL_GAP_TOLERANCE_SECS {
            return Err(Error::LabelsIncomplete(format!(
                "no label between {covered:.4} s and {:.4} s",
                r.start
            )));
        }
        covered = covered.max(r.end);
    }
    if covered + LABEL_GAP_TOLERANCE_SECS < duration {
        return Err(Error::LabelsIncomplete(format!(
            "labels end at {covered:.4} s, utterance lasts {duration:.4} s"
        )));
    }
    Ok(())
}

/// Energy and zero-crossing voicing detector, used when no label file exists.
pub fn detect_vuv(w: &Waveform, plan: &FramePlan) -> VoicedMask {
    let x = w.samples();
    let stats: Vec<(f64, f64)> = plan
        .starts()
        .iter()
        .map(|&s| {
            let end = (s + plan.frame_length()).min(x.len());
            let seg = &x[s.min(end)..end];
            if seg.is_empty() {
                return (0.0, 0.0);
            }
            let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
            let crossings = seg
                .windows(2)
                .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
                .count();
            let zcr = crossings as f64 / (seg.len().max(2) - 1) as f64;
            (rms, zcr)
        })
        .collect();

    let loudest = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    let floor = (loudest * 10f64.powf(DETECTOR_ACTIVE_DB / 20.0)).max(1e-9);
    let mut active: Vec<f64> = stats.iter().map(|s| s.0).filter(|&r| r > floor).collect();
    if active.is_empty() {
        return VoicedMask::new(vec![false; stats.len()], MaskSource::Detector);
    }
    active.sort_by(f64::total_cmp);
    let median = crate::stats::median_sorted(&active);
    let labels = stats
        .iter()
        .map(|&(rms, zcr)| rms > floor && rms > DETECTOR_RMS_RATIO * median && zcr < DETECTOR_ZCR_MAX)
        .collect();
    VoicedMask::new(labels, MaskSource::Detector)
}
