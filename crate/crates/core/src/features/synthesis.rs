//! Pitch-synchronous source-filter resynthesis from [`UtteranceFeatures`].
//!
//! Every excitation event (one per pitch period when voiced, one every 2 ms
//! otherwise) is rendered in the frequency domain as a minimum-phase
//! envelope applied to a pulse and a noise segment, mixed per bin by the
//! decoded aperiodicity, then overlap-added.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::analysis::{check_fs, CAP_BAND_CENTERS, CAP_FLOOR_DB};
use super::mcep::McepTransform;
use super::{hop_size, UtteranceFeatures, MCEP_ALPHA, MCEP_DIM};
use crate::error::Result;

const FFT_SIZE: usize = 2048;
const UNVOICED_EVENT_HZ: f64 = 500.0;
const NOISE_SEED: u64 = 0x5EED_C0DE;

/// Number of samples produced for `n_frames` frames.
pub fn output_len(n_frames: usize, fs: u32) -> usize {
    (n_frames - 1) * hop_size(fs) + 1
}

/// Renders a waveform from features. Deterministic: the noise source uses a
/// fixed seed.
pub fn synthesize(feat: &UtteranceFeatures, fs: u32) -> Result<Vec<f32>> {
    check_fs(fs)?;
    let n_frames = feat.n_frames();
    let hop = hop_size(fs) as f64;
    let fs_f = fs as f64;
    let len = output_len(n_frames, fs);
    let half = FFT_SIZE / 2;

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(FFT_SIZE);
    let inv = planner.plan_fft_inverse(FFT_SIZE);
    let transform = McepTransform::new(FFT_SIZE, MCEP_DIM, MCEP_ALPHA);

    let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED);
    let noise: Vec<f64> = (0..len + FFT_SIZE)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let mut filters: Vec<Option<FrameFilter>> = vec![None; n_frames];
    let mut out = vec![0.0f64; len + FFT_SIZE];
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    let mut noise_buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];

    let mut pos = 0.0f64;
    while pos < len as f64 {
        let frame = ((pos / hop).round() as usize).min(n_frames - 1);
        let voiced = feat.uv()[frame];
        let period = if voiced {
            fs_f / lf0_at(feat, pos / hop).exp()
        } else {
            fs_f / UNVOICED_EVENT_HZ
        };
        let start = pos.floor() as usize;
        let frac = pos - start as f64;
        let seg_len = period.round().max(1.0) as usize;

        let filter = filters[frame].get_or_insert_with(|| {
            FrameFilter::new(feat, frame, fs_f, &transform, fwd.as_ref(), inv.as_ref())
        });

        for (j, slot) in noise_buf.iter_mut().enumerate() {
            let v = if j < seg_len { noise[start + j] } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        fwd.process(&mut noise_buf);

        let pulse_gain = period.sqrt();
        for k in 0..=half {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / FFT_SIZE as f64;
            let shift = Complex64::from_polar(1.0, -omega * frac);
            let periodic = if voiced {
                shift * (pulse_gain * filter.periodic_gain[k])
            } else {
                Complex64::new(0.0, 0.0)
            };
            let noise_gain = if voiced { filter.noise_gain[k] } else { 1.0 };
            buf[k] = filter.envelope[k] * (periodic + noise_buf[k] * noise_gain);
        }
        for k in half + 1..FFT_SIZE {
            buf[k] = buf[FFT_SIZE - k].conj();
        }
        inv.process(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            out[start + j] += v.re / FFT_SIZE as f64;
        }
        pos += period;
    }

    out.truncate(len);
    Ok(out.into_iter().map(|v| v as f32).collect())
}

/// Log F0 at fractional frame position, interpolated between neighbours.
fn lf0_at(feat: &UtteranceFeatures, frame_pos: f64) -> f64 {
    let lf0 = feat.lf0();
    let lo = (frame_pos.floor() as usize).min(lf0.len() - 1);
    let hi = (lo + 1).min(lf0.len() - 1);
    let a = frame_pos - lo as f64;
    lf0[lo] as f64 * (1.0 - a) + lf0[hi] as f64 * a
}

#[derive(Clone)]
struct FrameFilter {
    /// Minimum-phase envelope on bins `0..=half`.
    envelope: Vec<Complex64>,
    periodic_gain: Vec<f64>,
    noise_gain: Vec<f64>,
}

impl FrameFilter {
    fn new(
        feat: &UtteranceFeatures,
        frame: usize,
        fs: f64,
        transform: &McepTransform,
        fwd: &dyn rustfft::Fft<f64>,
        inv: &dyn rustfft::Fft<f64>,
    ) -> Self {
        let half = FFT_SIZE / 2;
        let mc: Vec<f64> = feat.mcep_frame(frame).iter().map(|&v| v as f64).collect();
        let mut log_amp = vec![0.0; half + 1];
        transform.mcep_to_log_amplitude(&mc, &mut log_amp);

        // Real cepstrum of the log amplitude, folded onto positive quefrency.
        let mut cep: Vec<Complex64> = (0..FFT_SIZE)
            .map(|k| Complex64::new(log_amp[if k <= half { k } else { FFT_SIZE - k }], 0.0))
            .collect();
        inv.process(&mut cep);
        for (n, c) in cep.iter_mut().enumerate() {
            let scale = match n {
                0 => 1.0,
                n if n == half => 1.0,
                n if n < half => 2.0,
                _ => 0.0,
            };
            *c = Complex64::new(c.re * scale / FFT_SIZE as f64, 0.0);
        }
        fwd.process(&mut cep);
        let envelope = cep[..=half].iter().map(|c| c.exp()).collect();

        let cap = feat.cap_frame(frame);
        let nyquist = fs / 2.0;
        let mut axis = vec![0.0];
        axis.extend(CAP_BAND_CENTERS);
        axis.push(nyquist);
        let mut values = vec![CAP_FLOOR_DB];
        values.extend(cap.iter().map(|&c| c as f64));
        values.push(0.0);
        let mut periodic_gain = Vec::with_capacity(half + 1);
        let mut noise_gain = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let hz = k as f64 * fs / FFT_SIZE as f64;
            let db = interp(&axis, &values, hz).min(0.0);
            let ap = 10f64.powf(db / 20.0);
            noise_gain.push(ap);
            periodic_gain.push((1.0 - ap * ap).max(0.0).sqrt());
        }
        FrameFilter {
            envelope,
            periodic_gain,
            noise_gain,
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let a = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + a * (ys[i] - ys[i - 1]);
        }
    }
    ys[ys.len() - 1]
}
