//! Seeded synthetic material: speech-like utterances with exact voicing
//! labels, harmonic test tones, and noise shaped to a long-term spectrum.
//!
//! Utterances are strings of syllables: an optional fricative burst, then a
//! vowel made of F0-locked harmonics shaped by a cascade of formant
//! resonances whose targets glide between two vowels, then a short pause.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use serde::Serialize;

use crate::audio::{format_vuv_labels, write_wav, LabelRegion, Waveform};
use crate::dsp;
use crate::error::{Error, Result};

/// Peak level of generated utterances and tones.
const PEAK: f64 = 0.5;

/// First three formant frequencies (Hz) of a few vowels.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const FORMANT_BANDWIDTHS: [f64; 5] = [80.0, 100.0, 120.0, 200.0, 250.0];
const UPPER_FORMANTS: [f64; 2] = [3500.0, 4500.0];

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Magnitude of a cascade of second-order resonances, unity at DC.
fn formant_gain(f: f64, formants: &[f64]) -> f64 {
    formants
        .iter()
        .zip(FORMANT_BANDWIDTHS)
        .map(|(&fc, bw)| fc * fc / ((fc * fc - f * f).powi(2) + (bw * f).powi(2)).sqrt())
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthUtterance {
    #[serde(skip)]
    pub waveform: Waveform,
    #[serde(skip)]
    pub regions: Vec<LabelRegion>,
    pub base_f0: f64,
    pub seed: u64,
}

/// Converts per-sample voicing into contiguous label regions covering the
/// whole signal.
fn regions_from_flags(voiced: &[bool], fs: f64) -> Vec<LabelRegion> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=voiced.len() {
        if t == voiced.len() || voiced[t] != voiced[start] {
            out.push(LabelRegion {
                start: start as f64 / fs,
                end: t as f64 / fs,
                voiced: voiced[start],
            });
            start = t;
        }
    }
    out
}

fn ramp_envelope(n: usize, attack: usize, release: usize) -> impl Fn(usize) -> f64 {
    move |i| {
        let a = if i < attack { 0.5 - 0.5 * (PI * i as f64 / attack as f64).cos() } else { 1.0 };
        let r = if i + release >= n {
            let j = n - i;
            0.5 - 0.5 * (PI * j as f64 / release as f64).cos()
        } else {
            1.0
        };
        a * r
    }
}

/// A speech-like utterance of about `duration_secs` with exact labels.
pub fn synth_utterance(seed: u64, fs: u32, duration_secs: f64) -> SynthUtterance {
    let mut rng = rng_for(seed, 0);
    let fsf = fs as f64;
    let total = (duration_secs * fsf).round().max(1.0) as usize;
    let mut x = vec![0.0; total];
    let mut voiced = vec![false; total];
    let base_f0 = 95.0 + 130.0 * rng.random::<f64>();
    let nyquist = fsf / 2.0;

    let mut t = (0.15 + 0.15 * rng.random::<f64>()) * fsf;
    let tail = 0.2 * fsf;
    let mut syllable = 0usize;
    while (t as usize) + (0.2 * fsf) as usize + tail as usize <= total {
        // fricative onset
        if rng.random::<f64>() < 0.5 {
            let n = ((0.05 + 0.07 * rng.random::<f64>()) * fsf) as usize;
            let level = 0.03 + 0.04 * rng.random::<f64>();
            let env = ramp_envelope(n, n / 4, n / 4);
            let (mut p1, mut p2) = (0.0, 0.0);
            let start = t as usize;
            for i in 0..n.min(total - start) {
                let w: f64 = rng.sample(StandardNormal);
                // two first differences: strong high-frequency emphasis
                let d1 = w - p1;
                let d2 = d1 - p2;
                p1 = w;
                p2 = d1;
                x[start + i] += level * env(i) * d2;
            }
            t += n as f64;
        }

        // vowel
        let n = ((0.14 + 0.16 * rng.random::<f64>()) * fsf) as usize;
        let start = t as usize;
        let n = n.min(total - start - tail as usize);
        let va = VOWELS[rng.random_range(0..VOWELS.len())];
        let vb = VOWELS[rng.random_range(0..VOWELS.len())];
        let level = 0.6 + 0.4 * rng.random::<f64>();
        let declination = 1.0 - 0.15 * (t / total as f64);
        let f_start = base_f0 * declination * (0.92 + 0.16 * rng.random::<f64>());
        let f_end = f_start * (0.9 + 0.2 * rng.random::<f64>());
        let env = ramp_envelope(n, (0.025 * fsf) as usize, (0.04 * fsf) as usize);
        let mut phase = 0.0;
        for i in 0..n {
            let u = i as f64 / n as f64;
            let f0 = f_start + (f_end - f_start) * u;
            phase += 2.0 * PI * f0 / fsf;
            let formants: Vec<f64> = (0..3)
                .map(|j| va[j] + (vb[j] - va[j]) * u)
                .chain(UPPER_FORMANTS)
                .collect();
            let mut s = 0.0;
            let mut k = 1;
            while k as f64 * f0 < 0.95 * nyquist {
                let fk = k as f64 * f0;
                s += formant_gain(fk, &formants) / k as f64 * (k as f64 * phase).sin();
                k += 1;
            }
            x[start + i] += level * env(i) * s;
            voiced[start + i] = true;
        }
        t += n as f64;
        syllable += 1;

        // pause
        t += (0.03 + 0.09 * rng.random::<f64>()) * fsf;
        if syllable.is_multiple_of(4) {
            t += 0.15 * fsf;
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    SynthUtterance {
        waveform: Waveform::new(x, fs).expect("synthesised samples are finite"),
        regions: regions_from_flags(&voiced, fsf),
        base_f0,
        seed,
    }
}

/// `harmonics` equal-amplitude harmonics of `f0` with seeded random phases.
pub fn harmonic_source(f0: f64, harmonics: usize, secs: f64, fs: u32, seed: u64) -> Result<Waveform> {
    if harmonics as f64 * f0 >= fs as f64 / 2.0 {
        return Err(Error::Contract(format!(
            "{harmonics} harmonics of {f0} Hz exceed Nyquist at {fs} Hz"
        )));
    }
    let mut rng = rng_for(seed, 1);
    let phases: Vec<f64> = (0..harmonics).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
    let n = (secs * fs as f64).round() as usize;
    let mut x: Vec<f64> = (0..n)
        .map(|t| {
            let ts = t as f64 / fs as f64;
            phases
                .iter()
                .enumerate()
                .map(|(k, p)| (2.0 * PI * (k + 1) as f64 * f0 * ts + p).sin())
                .sum()
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v *= PEAK / peak);
    Waveform::new(x, fs)
}

/// Welch-averaged power spectrum (Hann, 50% overlap) over every frame of
/// every signal; `nfft / 2 + 1` bins.
pub fn long_term_spectrum(signals: &[Waveform], nfft: usize) -> Result<Vec<f64>> {
    let w: Vec<f64> = (0..nfft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nfft as f64).cos())
        .collect();
    let fft = dsp::forward(nfft);
    let mut acc = vec![0.0; nfft / 2 + 1];
    let mut frames = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for s in signals {
        let x = s.samples();
        let mut start = 0;
        while start + nfft <= x.len() {
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(x[start + i] * w[i], 0.0);
            }
            fft.process(&mut buf);
            for (a, c) in acc.iter_mut().zip(&buf) {
                *a += c.norm_sqr();
            }
            frames += 1;
            start += nfft / 2;
        }
    }
    if frames == 0 || acc.iter().all(|&a| a == 0.0) {
        return Err(Error::Degenerate("no energy to estimate a long-term spectrum from".into()));
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    Ok(acc)
}

/// Stationary noise with magnitude spectrum `sqrt(ltas)` (linearly
/// interpolated to the output resolution) and uniform random phase, scaled
/// to unit RMS.
pub fn speech_shaped_noise(ltas: &[f64], len: usize, fs: u32, seed: u64) -> Result<Waveform> {
    if ltas.len() < 2 || len == 0 {
        return Err(Error::Contract("shaped noise needs a spectrum and a length".into()));
    }
    let mut rng = rng_for(seed, 2);
    let half = len / 2;
    let mut spec = vec![Complex::new(0.0, 0.0); len];
    for (bin, slot) in spec.iter_mut().enumerate().take(half + 1).skip(1) {
        let pos = bin as f64 / len as f64 * 2.0 * (ltas.len() - 1) as f64;
        let i = (pos.floor() as usize).min(ltas.len() - 2);
        let frac = pos - i as f64;
        let mag = (ltas[i] * (1.0 - frac) + ltas[i + 1] * frac).max(0.0).sqrt();
        let phase = 2.0 * PI * rng.random::<f64>();
        *slot = Complex::from_polar(mag, phase);
    }
    if len.is_multiple_of(2) {
        // the Nyquist bin of a real signal is real
        spec[half].im = 0.0;
    }
    for bin in 1..len.div_ceil(2) {
        spec[len - bin] = spec[bin].conj();
    }
    dsp::inverse(len).process(&mut spec);
    let mut x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::Degenerate("shaped noise has no energy".into()));
    }
    x.iter_mut().for_each(|v| *v *= 0.1 / rms);
    Waveform::new(x, fs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusEntry {
    pub wav: PathBuf,
    pub labels: PathBuf,
    pub base_f0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    pub utterances: Vec<CorpusEntry>,
    pub noise: PathBuf,
}

/// Writes `count` utterances (`utt_NN.wav` with `utt_NN.vuv` labels) and a
/// 10 s speech-shaped noise `ssn.wav` built from their long-term spectrum.
pub fn write_corpus(dir: &Path, count: usize, seed: u64, fs: u32, secs: f64) -> Result<Corpus> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let utts: Vec<SynthUtterance> = (0..count)
        .map(|i| synth_utterance(seed.wrapping_add(i as u64), fs, secs))
        .collect();
    let mut entries = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        let wav = dir.join(format!("utt_{i:02}.wav"));
        let labels = dir.join(format!("utt_{i:02}.vuv"));
        write_wav(&wav, &u.waveform)?;
        std::fs::write(&labels, format_vuv_labels(&u.regions)).map_err(|e| Error::io(&labels, e))?;
        entries.push(CorpusEntry {
            wav,
            labels,
            base_f0: u.base_f0,
        });
    }
    let waves: Vec<Waveform> = utts.into_iter().map(|u| u.waveform).collect();
    let ltas = long_term_spectrum(&waves, 512)?;
    let noise = speech_shaped_noise(&ltas, 10 * fs as usize, fs, seed)?;
    let noise_path = dir.join("ssn.wav");
    write_wav(&noise_path, &noise)?;
    Ok(Corpus {
        utterances: entries,
        noise: noise_path,
    })
}
