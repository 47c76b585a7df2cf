//! Empirical mode decomposition and its noise-assisted ensemble variant.
//!
//! Sifting subtracts the mean of cubic-spline envelopes through the local
//! maxima and minima until the standard-deviation criterion between
//! successive sifts drops below a threshold. Boundary extrema are mirrored
//! across the frame edges (or across the outermost extremum when the signal
//! end lies inside the envelope range) so the splines do not swing wildly at
//! the ends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extrema mirrored beyond each frame edge.
const MIRRORED_EXTREMA: usize = 2;
/// Sifting continues past `max_sifts` only while the candidate still violates
/// the extrema/zero-crossing property, and never beyond this many passes.
const HARD_MAX_SIFTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiftConfig {
    /// Stop when sum((h_prev - h)^2) / sum(h_prev^2) falls below this.
    pub sd_threshold: f64,
    pub max_sifts: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            sd_threshold: 0.2,
            max_sifts: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EemdConfig {
    pub ensemble_size: usize,
    /// Added white-noise standard deviation, relative to the frame's.
    pub noise_std_ratio: f64,
    pub sift: SiftConfig,
}

impl Default for EemdConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 50,
            noise_std_ratio: 0.2,
            sift: SiftConfig::default(),
        }
    }
}

/// Intrinsic mode functions plus the residual of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfDecomposition {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub ensemble_size: usize,
    pub noise_std_ratio: f64,
}

impl ImfDecomposition {
    pub fn len(&self) -> usize {
        self.imfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imfs.is_empty()
    }

    /// Sum of all IMFs and the residual.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            out.iter_mut().zip(imf).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// Multi-column CSV dump (`t,imf1,...,imfK,residual`) for debugging.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.imfs.len() {
            s.push_str(&format!(",imf{k}"));
        }
        s.push_str(",residual\n");
        for t in 0..self.residual.len() {
            s.push_str(&t.to_string());
            for imf in &self.imfs {
                s.push_str(&format!(",{:.9e}", imf[t]));
            }
            s.push_str(&format!(",{:.9e}\n", self.residual[t]));
        }
        s
    }
}

/// Upper bound on the number of modes extracted from `len` samples.
pub fn max_imfs(len: usize) -> usize {
    (len as f64).log2().ceil() as usize + 1
}

pub fn emd(frame: &[f64]) -> Result<ImfDecomposition> {
    emd_with(frame, &SiftConfig::default())
}

pub fn emd_with(frame: &[f64], cfg: &SiftConfig) -> Result<ImfDecomposition> {
    check_frame(frame)?;
    Ok(decompose(frame, cfg))
}

pub fn eemd(
    frame: &[f64],
    ensemble_size: usize,
    noise_std_ratio: f64,
    seed: u64,
) -> Result<ImfDecomposition> {
    eemd_with(
        frame,
        &EemdConfig {
            ensemble_size,
            noise_std_ratio,
            ..EemdConfig::default()
        },
        seed,
    )
}

/// Ensemble EMD: decomposes `ensemble_size` noisy copies of the frame and
/// averages the modes index-wise (members with fewer modes contribute zeros).
/// Member `i` draws its noise from ChaCha8 stream `i` of `seed`, so the result
/// does not depend on evaluation order. The residual is whatever remains of
/// the input after subtracting the averaged modes, which keeps the
/// decomposition exactly complete.
pub fn eemd_with(frame: &[f64], cfg: &EemdConfig, seed: u64) -> Result<ImfDecomposition> {
    check_frame(frame)?;
    if cfg.ensemble_size == 0 {
        return Err(Error::Contract("ensemble size must be at least 1".into()));
    }
    if !(cfg.noise_std_ratio > 0.0 && cfg.noise_std_ratio <= 1.0) {
        return Err(Error::Contract(format!(
            "noise std ratio {} outside (0, 1]",
            cfg.noise_std_ratio
        )));
    }
    let n = frame.len();
    let mean = frame.iter().sum::<f64>() / n as f64;
    let std = (frame.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if std == 0.0 {
        let mut d = decompose(frame, &cfg.sift);
        d.ensemble_size = cfg.ensemble_size;
        d.noise_std_ratio = cfg.noise_std_ratio;
        return Ok(d);
    }
    let sigma = cfg.noise_std_ratio * std;

    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut noisy = vec![0.0; n];
    for member in 0..cfg.ensemble_size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(member as u64);
        for (y, &x) in noisy.iter_mut().zip(frame) {
            *y = x + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let d = decompose(&noisy, &cfg.sift);
        for (k, imf) in d.imfs.iter().enumerate() {
            if sums.len() <= k {
                sums.push(vec![0.0; n]);
            }
            sums[k].iter_mut().zip(imf).for_each(|(s, v)| *s += v);
        }
    }
    let inv = 1.0 / cfg.ensemble_size as f64;
    let imfs: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|s| s.into_iter().map(|v| v * inv).collect())
        .collect();
    let mut residual = frame.to_vec();
    for imf in &imfs {
        residual.iter_mut().zip(imf).for_each(|(r, v)| *r -= v);
    }
    Ok(ImfDecomposition {
        imfs,
        residual,
        ensemble_size: cfg.ensemble_size,
        noise_std_ratio: cfg.noise_std_ratio,
    })
}

fn check_frame(frame: &[f64]) -> Result<()> {
    if frame.len() < 8 {
        return Err(Error::Contract(format!(
            "EMD needs at least 8 samples, got {}",
            frame.len()
        )));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("EMD input has non-finite samples".into()));
    }
    Ok(())
}

fn decompose(frame: &[f64], cfg: &SiftConfig) -> ImfDecomposition {
    let n = frame.len();
    let mut residual = frame.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < max_imfs(n) {
        let Some(imf) = sift(&residual, cfg) else {
            break;
        };
        residual.iter_mut().zip(&imf).for_each(|(r, v)| *r -= v);
        imfs.push(imf);
    }
    ImfDecomposition {
        imfs,
        residual,
        ensemble_size: 1,
        noise_std_ratio: 0.0,
    }
}

/// Extracts one IMF from `x`, or `None` when `x` has too few extrema to
/// oscillate.
fn sift(x: &[f64], cfg: &SiftConfig) -> Option<Vec<f64>> {
    let mut h = x.to_vec();
    let mut mean = vec![0.0; x.len()];
    for pass in 0..HARD_MAX_SIFTS {
        let (maxs, mins) = extrema(&h);
        if maxs.len() < 2 || mins.len() < 2 {
            return if pass == 0 { None } else { Some(h) };
        }
        let (upper_knots, lower_knots) = envelope_knots(&h, &maxs, &mins);
        let upper = spline_eval(&upper_knots, h.len());
        let lower = spline_eval(&lower_knots, h.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..h.len() {
            mean[t] = 0.5 * (upper[t] + lower[t]);
            num += mean[t] * mean[t];
            den += h[t] * h[t];
        }
        h.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        let sd = if den > 0.0 { num / den } else { 0.0 };
        let done = sd < cfg.sd_threshold || pass + 1 >= cfg.max_sifts;
        if done && satisfies_imf_property(&h) {
            return Some(h);
        }
    }
    Some(h)
}

/// Indices of local maxima and minima. A plateau counts once, at its first
/// sample.
pub fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxs = Vec::new();
    let mut mins = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i] != x[i - 1] {
            // walk over a flat run to see where it leaves
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n {
                if x[i] > x[i - 1] && x[i] > x[j + 1] {
                    maxs.push(i);
                } else if x[i] < x[i - 1] && x[i] < x[j + 1] {
                    mins.push(i);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    (maxs, mins)
}

/// Sign changes, ignoring exact zeros.
pub fn zero_crossings(x: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0.0f64;
    for &v in x {
        if v != 0.0 {
            if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
                count += 1;
            }
            prev = v;
        }
    }
    count
}

/// The defining IMF property: extrema and zero crossings differ by at most one.
pub fn satisfies_imf_property(x: &[f64]) -> bool {
    let (maxs, mins) = extrema(x);
    (maxs.len() + mins.len()).abs_diff(zero_crossings(x)) <= 1
}

type Knots = Vec<(f64, f64)>;

fn envelope_knots(x: &[f64], maxs: &[usize], mins: &[usize]) -> (Knots, Knots) {
    let n = x.len();
    let (lmax, lmin) = edge_mirror(x, maxs, mins);
    let rx: Vec<f64> = x.iter().rev().copied().collect();
    let rmaxs: Vec<usize> = maxs.iter().rev().map(|&i| n - 1 - i).collect();
    let rmins: Vec<usize> = mins.iter().rev().map(|&i| n - 1 - i).collect();
    let (rmax, rmin) = edge_mirror(&rx, &rmaxs, &rmins);
    let flip = |pts: Knots| -> Knots {
        pts.into_iter()
            .map(|(t, v)| ((n - 1) as f64 - t, v))
            .collect()
    };
    let assemble = |left: Knots, idx: &[usize], right: Knots| -> Knots {
        let mut k: Knots = left;
        k.extend(idx.iter().map(|&i| (i as f64, x[i])));
        k.extend(right);
        k.sort_by(|a, b| a.0.total_cmp(&b.0));
        k.dedup_by(|a, b| a.0 == b.0);
        k
    };
    (
        assemble(lmax, maxs, flip(rmax)),
        assemble(lmin, mins, flip(rmin)),
    )
}

/// Mirrored knots beyond the left edge (time < 0, or the edge itself when the
/// edge sample is promoted to an extremum).
fn edge_mirror(
    x: &[f64],
    maxs: &[usize],
    mins: &[usize],
) -> (Knots, Knots) {
    let nb = MIRRORED_EXTREMA;
    let take = |v: &[usize], from: usize, count: usize| -> Vec<usize> {
        v.iter().skip(from).take(count).copied().collect()
    };
    let mut edge_max = false;
    let mut edge_min = false;
    let (mut lmax, mut lmin, mut sym);
    if maxs[0] < mins[0] {
        if x[0] > x[mins[0]] {
            lmax = take(maxs, 1, nb);
            lmin = take(mins, 0, nb);
            sym = maxs[0];
        } else {
            lmax = take(maxs, 0, nb);
            lmin = take(mins, 0, nb - 1);
            edge_min = true;
            sym = 0;
        }
    } else if x[0] < x[maxs[0]] {
        lmax = take(maxs, 0, nb);
        lmin = take(mins, 1, nb);
        sym = mins[0];
    } else {
        lmax = take(maxs, 0, nb - 1);
        lmin = take(mins, 0, nb);
        edge_max = true;
        sym = 0;
    }
    // mirrored points must land outside the frame; otherwise mirror about the edge
    let outside = |pts: &[usize], s: usize| pts.iter().all(|&i| 2 * s as isize - i as isize <= 0);
    if sym != 0 && !(outside(&lmax, sym) && outside(&lmin, sym)) {
        if sym == maxs[0] {
            lmax = take(maxs, 0, nb);
        } else {
            lmin = take(mins, 0, nb);
        }
        sym = 0;
    }
    let mirror = |pts: &[usize]| -> Knots {
        pts.iter()
            .map(|&i| (2.0 * sym as f64 - i as f64, x[i]))
            .collect()
    };
    let mut kmax = mirror(&lmax);
    let mut kmin = mirror(&lmin);
    if edge_max {
        kmax.push((0.0, x[0]));
    }
    if edge_min {
        kmin.push((0.0, x[0]));
    }
    (kmax, kmin)
}

/// Natural cubic spline through `knots` (sorted by time), evaluated at
/// integer times `0..len`.
fn spline_eval(knots: &[(f64, f64)], len: usize) -> Vec<f64> {
    let m = knots.len();
    if m == 1 {
        return vec![knots[0].1; len];
    }
    let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
    let mut second = vec![0.0; m];
    if m > 2 {
        // Thomas algorithm on the interior second-derivative system
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let k = m - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        second[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
        }
    }
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for i in 0..len {
        let ti = i as f64;
        while seg + 2 < m && ti > t[seg + 1] {
            seg += 1;
        }
        let h = t[seg + 1] - t[seg];
        let a = (t[seg + 1] - ti) / h;
        let b = (ti - t[seg]) / h;
        out.push(
            a * y[seg]
                + b * y[seg + 1]
                + ((a * a * a - a) * second[seg] + (b * b * b - b) * second[seg + 1]) * h * h / 6.0,
        );
    }
    out
}
