//! Conversion between log-amplitude spectra and mel-cepstra on a
//! first-order all-pass warped frequency axis.
//!
//! The log-amplitude envelope is `ln|H(w)| = c0 + sum_{m>=1} c_m cos(m * warp(w))`,
//! where `warp` is the phase response of the all-pass `(z^-1 - a) / (1 - a z^-1)`.

use std::f64::consts::PI;

/// Maps a linear frequency (radians, `0..=pi`) onto the warped axis.
pub fn warp(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin()).atan2(1.0 - alpha * omega.cos())
}

/// Inverse of [`warp`]; warping with `-alpha` undoes warping with `alpha`.
pub fn unwarp(omega_warped: f64, alpha: f64) -> f64 {
    warp(omega_warped, -alpha)
}

/// Precomputed tables for one (fft size, order, alpha) combination.
#[derive(Debug, Clone)]
pub struct McepTransform {
    fft_size: usize,
    order: usize,
    /// For every warped grid point: lower linear bin and interpolation weight.
    sample_pos: Vec<(usize, f64)>,
    /// `order x (half+1)` cosine table on the warped grid, trapezoid weights folded in.
    analysis_cos: Vec<f64>,
    /// `order x (half+1)` cosine table evaluated at warped linear bins.
    synthesis_cos: Vec<f64>,
}

impl McepTransform {
    pub fn new(fft_size: usize, order: usize, alpha: f64) -> Self {
        let half = fft_size / 2;
        let bin_width = 2.0 * PI / fft_size as f64;
        let sample_pos = (0..=half)
            .map(|j| {
                let w = unwarp(PI * j as f64 / half as f64, alpha).clamp(0.0, PI);
                let pos = (w / bin_width).min(half as f64);
                let lo = (pos.floor() as usize).min(half - 1);
                (lo, pos - lo as f64)
            })
            .collect();

        let mut analysis_cos = vec![0.0; order * (half + 1)];
        for m in 0..order {
            let scale = if m == 0 { 1.0 } else { 2.0 } / half as f64;
            for j in 0..=half {
                let trap = if j == 0 || j == half { 0.5 } else { 1.0 };
                analysis_cos[m * (half + 1) + j] =
                    scale * trap * (PI * (m * j) as f64 / half as f64).cos();
            }
        }

        let mut synthesis_cos = vec![0.0; order * (half + 1)];
        for k in 0..=half {
            let ww = warp(bin_width * k as f64, alpha);
            for m in 0..order {
                synthesis_cos[m * (half + 1) + k] = (m as f64 * ww).cos();
            }
        }

        McepTransform {
            fft_size,
            order,
            sample_pos,
            analysis_cos,
            synthesis_cos,
        }
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Mel-cepstrum from a natural-log amplitude spectrum sampled on the
    /// `fft_size/2 + 1` linear bins.
    pub fn log_amplitude_to_mcep(&self, log_amp: &[f64], out: &mut [f64]) {
        let half = self.fft_size / 2;
        debug_assert_eq!(log_amp.len(), half + 1);
        let warped: Vec<f64> = self
            .sample_pos
            .iter()
            .map(|&(lo, frac)| log_amp[lo] * (1.0 - frac) + log_amp[lo + 1] * frac)
            .collect();
        for (m, c) in out.iter_mut().enumerate().take(self.order) {
            let row = &self.analysis_cos[m * (half + 1)..(m + 1) * (half + 1)];
            *c = row.iter().zip(&warped).map(|(a, b)| a * b).sum();
        }
    }

    /// Natural-log amplitude on the linear bins from a mel-cepstrum.
    pub fn mcep_to_log_amplitude(&self, mcep: &[f64], out: &mut [f64]) {
        let half = self.fft_size / 2;
        out[..=half].fill(0.0);
        for (m, &c) in mcep.iter().enumerate().take(self.order) {
            let row = &self.synthesis_cos[m * (half + 1)..(m + 1) * (half + 1)];
            for (o, &cosv) in out.iter_mut().zip(row) {
                *o += c * cosv;
            }
        }
    }
}
