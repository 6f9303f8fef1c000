//! A synthetic speech corpus: formant-synthesized utterances with varied
//! vowels, voiceless fricatives, pauses and F0 contours. Every utterance is
//! a pure function of `(seed, index)`, so the fixture can be regenerated
//! bit-identically anywhere.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::SAMPLE_RATE;
use crate::wav;

/// (F1, F2, F3, F4) targets in Hz.
const VOWELS: [[f64; 4]; 5] = [
    [730.0, 1090.0, 2440.0, 3400.0],
    [270.0, 2290.0, 3010.0, 3700.0],
    [300.0, 870.0, 2240.0, 3400.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [570.0, 840.0, 2410.0, 3400.0],
];
const BANDWIDTHS: [f64; 4] = [70.0, 100.0, 140.0, 180.0];
/// Standard deviation of the additive background noise.
const NOISE_FLOOR: f64 = 2e-4;

/// Second-order resonator with per-sample coefficients.
#[derive(Default, Clone, Copy)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let t = 1.0 / fs;
        let c = -(-2.0 * PI * bw * t).exp();
        let b = 2.0 * (-PI * bw * t).exp() * (2.0 * PI * freq * t).cos();
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Silence,
    Fricative { center: f64 },
    Vowel { formants: [f64; 4] },
}

/// Renders utterance `index` of the corpus seeded by `seed`.
pub fn generate_utterance(seed: u64, index: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    let fs = SAMPLE_RATE as f64;

    let mut plan: Vec<(Segment, usize)> = vec![(Segment::Silence, (rng.gen_range(0.08..0.15) * fs) as usize)];
    let syllables = rng.gen_range(5..9);
    for s in 0..syllables {
        if rng.gen_bool(0.45) {
            let center = rng.gen_range(3500.0..6500.0);
            plan.push((Segment::Fricative { center }, (rng.gen_range(0.05..0.11) * fs) as usize));
        }
        let mut formants = VOWELS[rng.gen_range(0..VOWELS.len())];
        for f in &mut formants {
            *f *= rng.gen_range(0.93..1.07);
        }
        plan.push((Segment::Vowel { formants }, (rng.gen_range(0.12..0.24) * fs) as usize));
        if s + 1 < syllables && rng.gen_bool(0.15) {
            plan.push((Segment::Silence, (rng.gen_range(0.04..0.09) * fs) as usize));
        }
    }
    plan.push((Segment::Silence, (rng.gen_range(0.08..0.15) * fs) as usize));
    let total: usize = plan.iter().map(|(_, n)| n).sum();

    let base_f0 = rng.gen_range(95.0..210.0);
    let wobble_hz = rng.gen_range(0.4..1.2);
    let wobble_phase = rng.gen_range(0.0..2.0 * PI);

    // Per-sample targets, formants glide with a one-pole smoother.
    let mut voicing = vec![0.0f64; total];
    let mut frication = vec![0.0f64; total];
    let mut fric_center = vec![5000.0f64; total];
    let mut formant_target = vec![VOWELS[0]; total];
    let mut pos = 0;
    let mut last_formants = VOWELS[0];
    for (seg, len) in &plan {
        for i in 0..*len {
            let ramp = {
                let edge = (0.015 * fs) as usize;
                let a = (i.min(len - 1 - i) as f64 / edge as f64).min(1.0);
                0.5 - 0.5 * (PI * a).cos()
            };
            match seg {
                Segment::Silence => {}
                Segment::Fricative { center } => {
                    frication[pos + i] = ramp;
                    fric_center[pos + i] = *center;
                }
                Segment::Vowel { formants } => {
                    voicing[pos + i] = ramp;
                    last_formants = *formants;
                }
            }
            formant_target[pos + i] = last_formants;
        }
        pos += len;
    }

    let mut out = vec![0.0f64; total];
    let mut formants = formant_target[0];
    let mut tract = [Resonator::default(); 4];
    let mut fric_filter = Resonator::default();
    let mut tilt = 0.0f64;
    let mut phase = 0.0f64;
    let glide = 1.0 - (-1.0 / (0.02 * fs)).exp();
    for n in 0..total {
        let t = n as f64 / fs;
        let progress = n as f64 / total as f64;
        let f0 = base_f0 * (1.0 - 0.12 * progress) * (1.0 + 0.08 * (2.0 * PI * wobble_hz * t + wobble_phase).sin());
        phase += f0 / fs;
        let mut pulse = 0.0;
        if phase >= 1.0 {
            phase -= 1.0;
            pulse = 1.0;
        }
        let aspiration: f64 = StandardNormal.sample(&mut rng);
        // Glottal spectral tilt.
        tilt = 0.96 * tilt + pulse;
        let source = voicing[n] * (tilt - 1.0 / (1.0 - 0.96) * f0 / fs + 0.02 * aspiration);

        for (f, target) in formants.iter_mut().zip(&formant_target[n]) {
            *f += glide * (target - *f);
        }
        let mut v = source;
        for ((r, &f), &bw) in tract.iter_mut().zip(&formants).zip(&BANDWIDTHS) {
            v = r.step(v, f, bw, fs);
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        let fric = fric_filter.step(noise * frication[n], fric_center[n], 1800.0, fs);
        out[n] = v + 0.6 * fric;
    }

    // Lip radiation, then normalization and a recording noise floor.
    let mut prev = 0.0;
    for v in out.iter_mut() {
        let x = *v;
        *v = x - 0.97 * prev;
        prev = x;
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    out.into_iter()
        .map(|v| {
            let floor: f64 = StandardNormal.sample(&mut rng);
            (v * gain + NOISE_FLOOR * floor) as f32
        })
        .collect()
}

/// Utterance id of corpus entry `index`.
pub fn utterance_id(index: usize) -> String {
    format!("utt{index:03}")
}

/// Writes `count` utterances as `<dir>/uttNNN.wav`.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("{}.wav", utterance_id(i)));
            wav::write_wav(&path, &generate_utterance(seed, i), SAMPLE_RATE)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.wav` of `dir`, sorted by file name; ids are file stems.
pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, Vec<f32>, u32)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no .wav files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let (w, fs) = wav::read_wav(p)?;
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, w, fs))
        })
        .collect()
}
