//! Source-filter analysis: F0 and voicing, spectral envelope as mel-cepstrum,
//! and coded band aperiodicity, one frame every 5 ms.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::mcep::McepTransform;
use super::{
    default_lf0, frame_count, hop_size, UtteranceFeatures, CAP_DIM, MCEP_ALPHA, MCEP_DIM,
    SAMPLE_RATE,
};
use crate::error::{Error, Result};

/// Centre frequencies (Hz) of the coded aperiodicity bands.
pub const CAP_BAND_CENTERS: [f64; CAP_DIM] = [3000.0, 6000.0, 9000.0];
/// Half-width (Hz) of each aperiodicity band.
const CAP_BAND_HALF_WIDTH: f64 = 1500.0;
/// Lowest coded aperiodicity, dB.
pub const CAP_FLOOR_DB: f64 = -60.0;

const FFT_SIZE: usize = 2048;
const POWER_FLOOR: f64 = 1e-12;

/// A pluggable feature extractor.
pub trait Analyzer {
    fn analyze(&self, utt_id: &str, waveform: &[f32], fs: u32) -> Result<UtteranceFeatures>;
}

/// Analyzes `waveform` with the default [`SourceFilterAnalyzer`].
pub fn analyze(utt_id: &str, waveform: &[f32], fs: u32) -> Result<UtteranceFeatures> {
    SourceFilterAnalyzer::default().analyze(utt_id, waveform, fs)
}

pub(crate) fn check_fs(fs: u32) -> Result<()> {
    if fs != SAMPLE_RATE {
        return Err(Error::Config(format!(
            "unsupported fs {fs} Hz, only {SAMPLE_RATE} Hz is accepted"
        )));
    }
    Ok(())
}

/// YIN-style F0 tracking, pitch-adaptive smoothed power spectra, and
/// autocorrelation-based band aperiodicity.
#[derive(Debug, Clone)]
pub struct SourceFilterAnalyzer {
    pub f0_floor: f64,
    pub f0_ceil: f64,
    /// Cumulative-mean-normalized difference threshold for voicing.
    pub voicing_threshold: f64,
    /// Frames quieter than this RMS are unvoiced regardless of periodicity.
    pub silence_rms: f64,
    /// Voiced runs shorter than this many frames are discarded.
    pub min_voiced_run: usize,
    /// F0 assumed when sizing the envelope window of unvoiced frames.
    pub unvoiced_window_f0: f64,
    /// Envelope window length in pitch periods.
    pub envelope_periods: f64,
    /// Orthogonal sine tapers averaged per envelope estimate.
    pub envelope_tapers: usize,
}

impl Default for SourceFilterAnalyzer {
    fn default() -> Self {
        SourceFilterAnalyzer {
            f0_floor: 60.0,
            f0_ceil: 500.0,
            voicing_threshold: 0.15,
            silence_rms: 1e-4,
            min_voiced_run: 3,
            unvoiced_window_f0: 500.0,
            envelope_periods: 4.0,
            envelope_tapers: 3,
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            forward: planner.plan_fft_forward(FFT_SIZE),
            inverse: planner.plan_fft_inverse(FFT_SIZE),
        }
    }
}

fn sample(x: &[f32], i: isize) -> f64 {
    if i < 0 || i as usize >= x.len() {
        0.0
    } else {
        x[i as usize] as f64
    }
}

/// The `k`-th sine taper of length `len` (k starts at 1).
fn sine_taper(len: usize, k: usize) -> Vec<f64> {
    (0..len)
        .map(|n| (std::f64::consts::PI * k as f64 * (n as f64 + 1.0) / (len as f64 + 1.0)).sin())
        .collect()
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (n as f64 + 0.5) / len as f64).cos())
        .collect()
}

impl Analyzer for SourceFilterAnalyzer {
    fn analyze(&self, utt_id: &str, waveform: &[f32], fs: u32) -> Result<UtteranceFeatures> {
        check_fs(fs)?;
        if waveform.is_empty() {
            return Err(Error::Input("empty waveform".into()));
        }
        if let Some(i) = waveform.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("sample {i} is not finite")));
        }
        let n_frames = frame_count(waveform.len(), fs);
        let hop = hop_size(fs);
        let plans = Plans::new();

        let raw_f0: Vec<Option<f64>> = (0..n_frames)
            .map(|t| self.estimate_f0(waveform, (t * hop) as isize, fs, &plans))
            .collect();
        let raw_f0 = self.drop_short_runs(raw_f0);
        let (lf0, uv) = interpolate_lf0(&raw_f0);

        let transform = McepTransform::new(FFT_SIZE, MCEP_DIM, MCEP_ALPHA);
        let mut mcep = Vec::with_capacity(n_frames * MCEP_DIM);
        let mut cap = Vec::with_capacity(n_frames * CAP_DIM);
        let mut log_amp = vec![0.0; FFT_SIZE / 2 + 1];
        let mut coeffs = vec![0.0; MCEP_DIM];
        for (t, f0) in raw_f0.iter().enumerate() {
            let center = (t * hop) as isize;
            let env_f0 = f0.unwrap_or(self.unvoiced_window_f0);
            self.envelope(waveform, center, env_f0, fs, &plans, &mut log_amp);
            transform.log_amplitude_to_mcep(&log_amp, &mut coeffs);
            mcep.extend(coeffs.iter().map(|&c| c as f32));
            match f0 {
                Some(f0) => cap.extend(band_aperiodicity(waveform, center, *f0, fs, &plans)),
                None => cap.extend([0.0f32; CAP_DIM]),
            }
        }
        UtteranceFeatures::new(utt_id, mcep, lf0, uv, cap)
    }
}

impl SourceFilterAnalyzer {
    fn estimate_f0(&self, x: &[f32], center: isize, fs: u32, plans: &Plans) -> Option<f64> {
        let fs_f = fs as f64;
        let max_lag = (fs_f / self.f0_floor).ceil() as usize;
        let min_lag = (fs_f / self.f0_ceil).floor().max(2.0) as usize;
        let window = max_lag;
        let start = center - (window / 2) as isize;
        let seg: Vec<f64> = (0..window + max_lag + 1)
            .map(|j| sample(x, start + j as isize))
            .collect();

        let energy0: f64 = seg[..window].iter().map(|v| v * v).sum();
        if (energy0 / window as f64).sqrt() < self.silence_rms {
            return None;
        }

        // Cross-correlation r(tau) = sum_{j<W} s[j] s[j+tau] via FFT.
        let mut a: Vec<Complex64> = (0..FFT_SIZE)
            .map(|j| Complex64::new(if j < window { seg[j] } else { 0.0 }, 0.0))
            .collect();
        let mut b: Vec<Complex64> = (0..FFT_SIZE)
            .map(|j| Complex64::new(seg.get(j).copied().unwrap_or(0.0), 0.0))
            .collect();
        plans.forward.process(&mut a);
        plans.forward.process(&mut b);
        for (av, bv) in a.iter_mut().zip(&b) {
            *av = av.conj() * bv;
        }
        plans.inverse.process(&mut a);
        let norm = 1.0 / FFT_SIZE as f64;

        let mut prefix = vec![0.0; seg.len() + 1];
        for (i, v) in seg.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * v;
        }
        let mut cmnd = vec![1.0; max_lag + 1];
        let mut running = 0.0;
        for tau in 1..=max_lag {
            let energy_tau = prefix[tau + window] - prefix[tau];
            let d = (energy0 + energy_tau - 2.0 * a[tau].re * norm).max(0.0);
            running += d;
            cmnd[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
        }

        let mut tau = min_lag;
        let mut found = None;
        while tau < max_lag {
            if cmnd[tau] < self.voicing_threshold {
                while tau + 1 < max_lag && cmnd[tau + 1] < cmnd[tau] {
                    tau += 1;
                }
                found = Some(tau);
                break;
            }
            tau += 1;
        }
        let tau = found?;
        let refined = if tau > min_lag && tau + 1 <= max_lag {
            let (l, c, r) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
            let denom = l - 2.0 * c + r;
            if denom.abs() > 1e-12 {
                tau as f64 + (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                tau as f64
            }
        } else {
            tau as f64
        };
        let f0 = fs_f / refined;
        (self.f0_floor..=self.f0_ceil).contains(&f0).then_some(f0)
    }

    fn drop_short_runs(&self, mut f0: Vec<Option<f64>>) -> Vec<Option<f64>> {
        let mut t = 0;
        while t < f0.len() {
            if f0[t].is_none() {
                t += 1;
                continue;
            }
            let start = t;
            while t < f0.len() && f0[t].is_some() {
                t += 1;
            }
            if t - start < self.min_voiced_run {
                f0[start..t].fill(None);
            }
        }
        f0
    }

    /// Multitaper pitch-adaptive power spectrum, smoothed over one F0 width
    /// and at least the mel-cepstral resolution at high frequencies; writes the
    /// natural-log amplitude of the `FFT_SIZE/2 + 1` bins into `log_amp`.
    fn envelope(
        &self,
        x: &[f32],
        center: isize,
        f0: f64,
        fs: u32,
        plans: &Plans,
        log_amp: &mut [f64],
    ) {
        let fs_f = fs as f64;
        let len = ((self.envelope_periods * fs_f / f0).round() as usize).clamp(16, FFT_SIZE);
        let start = center - (len / 2) as isize;
        let half = FFT_SIZE / 2;
        let mut power = vec![0.0; half + 1];
        let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
        let tapers = self.envelope_tapers.max(1);
        for k in 1..=tapers {
            let taper = sine_taper(len, k);
            let taper_power: f64 = taper.iter().map(|w| w * w).sum();
            buf.fill(Complex64::new(0.0, 0.0));
            for (j, w) in taper.iter().enumerate() {
                buf[j] = Complex64::new(w * sample(x, start + j as isize), 0.0);
            }
            plans.forward.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf[..=half]) {
                *p += c.norm_sqr() / (taper_power * tapers as f64);
            }
        }
        let width_bins = f0 * FFT_SIZE as f64 / fs_f;
        smooth_rect(&power, &smoothing_widths(width_bins, half), log_amp);
        for v in log_amp.iter_mut() {
            *v = 0.5 * v.max(POWER_FLOOR).ln();
        }
    }
}

/// Rectangular smoothing of a one-sided spectrum, bin `k` averaging over
/// `widths[k]` bins, with mirror extension at both ends. Fractional widths
/// are handled by interpolating the cumulative sum.
fn smooth_rect(power: &[f64], widths: &[f64], out: &mut [f64]) {
    let half = power.len() - 1;
    let max_w = widths.iter().fold(1.0f64, |m, &w| m.max(w));
    let pad = max_w.ceil() as usize + 2;
    let ext_len = half + 1 + 2 * pad;
    let ext_at = |i: isize| -> f64 {
        let mut j = i - pad as isize;
        if j < 0 {
            j = -j;
        }
        if j > half as isize {
            j = 2 * half as isize - j;
        }
        power[j.clamp(0, half as isize) as usize]
    };
    let mut cum = vec![0.0; ext_len + 1];
    for i in 0..ext_len {
        cum[i + 1] = cum[i] + ext_at(i as isize);
    }
    let cum_at = |p: f64| -> f64 {
        let p = p.clamp(0.0, ext_len as f64);
        let lo = (p.floor() as usize).min(ext_len - 1);
        let frac = p - lo as f64;
        cum[lo] * (1.0 - frac) + cum[lo + 1] * frac
    };
    for (k, o) in out.iter_mut().enumerate().take(half + 1) {
        let w = widths[k].max(1.0);
        // Bin k covers [k, k+1) in the cumulative index of the extension.
        let c = (k + pad) as f64 + 0.5;
        *o = (cum_at(c + w / 2.0) - cum_at(c - w / 2.0)) / w;
    }
}

/// Smoothing width per bin: one F0, widened to the frequency resolution
/// of the mel-cepstrum on the warped axis.
fn smoothing_widths(f0_bins: f64, half: usize) -> Vec<f64> {
    let a = MCEP_ALPHA;
    let warped_step = std::f64::consts::PI / MCEP_DIM as f64;
    (0..=half)
        .map(|k| {
            let omega = std::f64::consts::PI * k as f64 / half as f64;
            let slope = (1.0 - a * a) / (1.0 - 2.0 * a * omega.cos() + a * a);
            let mel_bins = warped_step / slope * half as f64 / std::f64::consts::PI;
            f0_bins.max(mel_bins)
        })
        .collect()
}

/// Linear interpolation of log F0 through unvoiced frames. Edges take the
/// nearest voiced value; with no voiced frame at all the track is constant.
fn interpolate_lf0(f0: &[Option<f64>]) -> (Vec<f32>, Vec<bool>) {
    let uv: Vec<bool> = f0.iter().map(Option::is_some).collect();
    let voiced: Vec<(usize, f64)> = f0
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|hz| (t, hz.ln())))
        .collect();
    if voiced.is_empty() {
        return (vec![default_lf0(); f0.len()], uv);
    }
    let mut lf0 = vec![0.0f32; f0.len()];
    let mut next = 0;
    for (t, slot) in lf0.iter_mut().enumerate() {
        while next < voiced.len() && voiced[next].0 < t {
            next += 1;
        }
        *slot = if next < voiced.len() && voiced[next].0 == t {
            voiced[next].1 as f32
        } else if next == 0 {
            voiced[0].1 as f32
        } else if next == voiced.len() {
            voiced[voiced.len() - 1].1 as f32
        } else {
            let (t0, v0) = voiced[next - 1];
            let (t1, v1) = voiced[next];
            let a = (t - t0) as f64 / (t1 - t0) as f64;
            (v0 + a * (v1 - v0)) as f32
        };
    }
    (lf0, uv)
}

/// Per-band aperiodicity from the normalized autocorrelation of the
/// band-limited, windowed frame at the pitch lag. Returned in dB, in
/// `[CAP_FLOOR_DB, 0]`.
fn band_aperiodicity(x: &[f32], center: isize, f0: f64, fs: u32, plans: &Plans) -> [f32; CAP_DIM] {
    let fs_f = fs as f64;
    let period = fs_f / f0;
    let len = ((4.0 * period).round() as usize).min(FFT_SIZE / 2);
    let win = hann(len);
    let start = center - (len / 2) as isize;
    let mut spec = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for (j, w) in win.iter().enumerate() {
        spec[j] = Complex64::new(w * sample(x, start + j as isize), 0.0);
    }
    plans.forward.process(&mut spec);
    let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();

    let lag_factor = |lag: usize| -> f64 {
        if lag >= len {
            return 0.0;
        }
        win[..len - lag].iter().zip(&win[lag..]).map(|(a, b)| a * b).sum()
    };
    let w0 = lag_factor(0);
    let lo = period.floor() as usize;
    let frac = period - lo as f64;
    let window_corr = (lag_factor(lo) * (1.0 - frac) + lag_factor(lo + 1) * frac) / w0;

    let mut out = [0.0f32; CAP_DIM];
    let mut band = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for (b, &fc) in CAP_BAND_CENTERS.iter().enumerate() {
        for (k, slot) in band.iter_mut().enumerate() {
            let bin = if k <= FFT_SIZE / 2 { k } else { FFT_SIZE - k };
            let hz = bin as f64 * fs_f / FFT_SIZE as f64;
            let d = (hz - fc).abs() / CAP_BAND_HALF_WIDTH;
            let mask = if d < 1.0 {
                0.5 + 0.5 * (std::f64::consts::PI * d).cos()
            } else {
                0.0
            };
            *slot = Complex64::new(power[k] * mask, 0.0);
        }
        plans.inverse.process(&mut band);
        let r0 = band[0].re;
        let r_lag = band[lo].re * (1.0 - frac) + band[(lo + 1) % FFT_SIZE].re * frac;
        let periodicity = if r0 > 0.0 && window_corr > 1e-6 {
            (r_lag / r0 / window_corr).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let db = 10.0 * (1.0 - periodicity).max(1e-6).log10();
        out[b] = db.max(CAP_FLOOR_DB) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sawtooth(f0: f64, seconds: f64) -> Vec<f32> {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        (0..n)
            .map(|i| {
                let phase = (i as f64 * f0 / SAMPLE_RATE as f64).fract();
                (0.5 * (2.0 * phase - 1.0)) as f32
            })
            .collect()
    }

    #[test]
    fn silence_is_unvoiced_and_flat() {
        let f = analyze("s", &vec![0.0; 24_000], SAMPLE_RATE).unwrap();
        assert_eq!(f.n_frames(), 201);
        assert!(f.uv().iter().all(|&v| !v));
        for t in 0..f.n_frames() {
            assert!(f.mcep_frame(t)[1..].iter().all(|c| c.abs() < 1e-6));
        }
        assert!(f.lf0().iter().all(|&v| v == default_lf0()));
    }

    #[test]
    fn sawtooth_f0_is_recovered() {
        let f = analyze("saw", &sawtooth(100.0, 0.5), SAMPLE_RATE).unwrap();
        let n = f.n_frames();
        assert_eq!(n, 101);
        // Interior frames are at least half a window away from the edges.
        for t in 10..n - 10 {
            let hz = f.f0_hz(t).unwrap_or_else(|| panic!("frame {t} unvoiced"));
            assert!((hz - 100.0).abs() <= 3.0, "frame {t}: {hz} Hz");
        }
    }

    #[test]
    fn pure_periodic_signal_has_low_aperiodicity() {
        let f = analyze("saw", &sawtooth(150.0, 0.3), SAMPLE_RATE).unwrap();
        let t = f.n_frames() / 2;
        assert!(f.uv()[t]);
        assert!(f.cap_frame(t).iter().all(|&c| c < -15.0), "{:?}", f.cap_frame(t));
    }

    #[test]
    fn rejects_wrong_rate_and_empty_input() {
        assert!(matches!(analyze("x", &[0.0; 100], 16_000), Err(Error::Config(_))));
        assert!(matches!(analyze("x", &[], SAMPLE_RATE), Err(Error::Input(_))));
    }

    #[test]
    fn interpolation_rules() {
        let (lf0, uv) = interpolate_lf0(&[None, Some(100.0), None, Some(400.0), None]);
        assert_eq!(uv, vec![false, true, false, true, false]);
        assert_eq!(lf0[0], (100.0f64).ln() as f32);
        assert_eq!(lf0[1], (100.0f64).ln() as f32);
        assert!((lf0[2] as f64 - (200.0f64).ln()).abs() < 1e-6);
        assert_eq!(lf0[4], (400.0f64).ln() as f32);
        let (lf0, _) = interpolate_lf0(&[None, None]);
        assert_eq!(lf0, vec![default_lf0(); 2]);
    }
}
