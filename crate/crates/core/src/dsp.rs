//! FFT-backed primitives: analytic signal and linear convolution.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Analytic signal `x + j H{x}` built from the one-sided spectrum: DC and
/// Nyquist kept, positive bins doubled, negative bins zeroed.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward(n).process(&mut buf);
    let half = n / 2;
    for (k, b) in buf.iter_mut().enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *b *= w;
    }
    inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|b| *b *= scale);
    buf
}

/// Magnitude of the analytic signal.
pub fn envelope(x: &[f64]) -> Vec<f64> {
    analytic_signal(x).iter().map(|z| z.norm()).collect()
}

/// Same-length linear convolution: `y[n] = sum_m h[m] x[n - (m - origin)]`,
/// i.e. the full convolution read from index `origin` onward. `origin` marks
/// the response sample that sits at time zero.
pub fn convolve_same(x: &[f64], h: &[f64], origin: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || h.is_empty() {
        return vec![0.0; n];
    }
    // taps further than n samples from the origin never reach the output
    let lo = origin.saturating_sub(n - 1);
    let hi = (origin + n).min(h.len());
    if lo >= hi {
        return vec![0.0; n];
    }
    let taps = &h[lo..hi];
    let origin = origin - lo;
    let full_len = n + taps.len() - 1;
    let size = full_len.next_power_of_two();

    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(size, Complex::default());
    let mut b: Vec<Complex<f64>> = taps.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(size, Complex::default());
    let fwd = forward(size);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    inverse(size).process(&mut a);
    let scale = 1.0 / size as f64;
    (0..n).map(|i| a[i + origin].re * scale).collect()
}

#[cfg(test)]
pub(crate) fn convolve_same_direct(x: &[f64], h: &[f64], origin: usize) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            h.iter()
                .enumerate()
                .filter_map(|(m, &hm)| {
                    let idx = n as isize - (m as isize - origin as isize);
                    (idx >= 0 && (idx as usize) < x.len()).then(|| hm * x[idx as usize])
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn analytic_of_cosine_is_unit_envelope() {
        let fs = 16000.0;
        let x: Vec<f64> = (0..512).map(|t| (2.0 * PI * 1000.0 * t as f64 / fs).cos()).collect();
        let env = envelope(&x);
        assert!(env.iter().all(|a| (a - 1.0).abs() < 0.02));
        let z = analytic_signal(&x);
        for (zi, xi) in z.iter().zip(&x) {
            assert!((zi.re - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_length_analytic_keeps_real_part() {
        let x: Vec<f64> = (0..101).map(|t| ((t * 7) % 13) as f64 - 6.0).collect();
        let z = analytic_signal(&x);
        for (zi, xi) in z.iter().zip(&x) {
            assert!((zi.re - xi).abs() < 1e-10);
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x: Vec<f64> = (0..300).map(|t| ((t * 31) % 17) as f64 / 17.0 - 0.5).collect();
        for (hlen, origin) in [(1usize, 0usize), (50, 10), (900, 450), (900, 0), (700, 699)] {
            let h: Vec<f64> = (0..hlen).map(|m| ((m * 13) % 11) as f64 / 11.0 - 0.4).collect();
            let a = convolve_same(&x, &h, origin);
            let b = convolve_same_direct(&x, &h, origin);
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-9 * scale, "hlen {hlen} origin {origin}");
            }
        }
    }

    #[test]
    fn identity_kernel() {
        let x = [1.0, -2.0, 3.0];
        let y = convolve_same(&x, &[0.0, 1.0, 0.0], 1);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
