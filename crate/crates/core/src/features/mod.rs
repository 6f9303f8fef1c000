//! Acoustic feature types and everything that produces or stores them.
//!
//! One frame is a 50-dimensional vector laid out as
//!
//! | dims    | content                                   |
//! |---------|-------------------------------------------|
//! | 0..45   | mel-cepstrum (dim 0 is the energy term)   |
//! | 45      | natural-log F0, interpolated when unvoiced |
//! | 46      | voicing flag, exactly 0 or 1              |
//! | 47..50  | coded band aperiodicity (dB)              |
//!
//! Frames are spaced [`FRAME_SHIFT_MS`] apart.

pub mod analysis;
pub mod format;
pub mod mcep;
pub mod norm;
pub mod synthesis;

use crate::error::{Error, Result};

pub use analysis::{analyze, Analyzer, SourceFilterAnalyzer};
pub use format::{read_features, write_features};
pub use norm::{compute_norm_stats, denormalize_mcep, normalize, Domain, NormStats};
pub use synthesis::synthesize;

pub const MCEP_DIM: usize = 45;
pub const CAP_DIM: usize = 3;
/// Width of a full frame: mcep, lf0, uv, cap.
pub const FRAME_DIM: usize = MCEP_DIM + 1 + 1 + CAP_DIM;
pub const LF0_INDEX: usize = MCEP_DIM;
pub const UV_INDEX: usize = MCEP_DIM + 1;
pub const CAP_OFFSET: usize = MCEP_DIM + 2;

pub const SAMPLE_RATE: u32 = 24_000;
pub const FRAME_SHIFT_MS: f64 = 5.0;
pub const FRAME_SHIFT_US: u32 = 5_000;
/// Mel-warping coefficient for 24 kHz analysis.
pub const MCEP_ALPHA: f64 = 0.466;

/// Log F0 assigned to utterances without a single voiced frame.
pub fn default_lf0() -> f32 {
    (120.0f64).ln() as f32
}

/// Samples per frame shift at `fs`.
pub fn hop_size(fs: u32) -> usize {
    (fs as f64 * FRAME_SHIFT_MS / 1000.0).round() as usize
}

/// Number of analysis frames for a waveform of `n_samples` at `fs`:
/// `floor(duration_ms / 5) + 1`.
pub fn frame_count(n_samples: usize, fs: u32) -> usize {
    // Integer form of floor(n * 1000 / fs / 5); exact for every fs.
    (n_samples as u64 * 1000 / (fs as u64 * 5)) as usize + 1
}

/// Per-frame acoustic features of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeatures {
    utt_id: String,
    mcep: Vec<f32>,
    lf0: Vec<f32>,
    uv: Vec<bool>,
    cap: Vec<f32>,
}

impl UtteranceFeatures {
    /// Builds a validated utterance. `mcep` is row-major `n × 45` and `cap`
    /// row-major `n × 3`.
    pub fn new(
        utt_id: impl Into<String>,
        mcep: Vec<f32>,
        lf0: Vec<f32>,
        uv: Vec<bool>,
        cap: Vec<f32>,
    ) -> Result<Self> {
        let feat = UtteranceFeatures {
            utt_id: utt_id.into(),
            mcep,
            lf0,
            uv,
            cap,
        };
        feat.validate()?;
        Ok(feat)
    }

    /// Builds an utterance from full 50-dim frames (row-major).
    pub fn from_frames(utt_id: impl Into<String>, frames: &[f32]) -> Result<Self> {
        if frames.len() % FRAME_DIM != 0 {
            return Err(Error::Shape(format!(
                "frame buffer of {} values is not a multiple of {FRAME_DIM}",
                frames.len()
            )));
        }
        let n = frames.len() / FRAME_DIM;
        let mut mcep = Vec::with_capacity(n * MCEP_DIM);
        let mut lf0 = Vec::with_capacity(n);
        let mut uv = Vec::with_capacity(n);
        let mut cap = Vec::with_capacity(n * CAP_DIM);
        for row in frames.chunks_exact(FRAME_DIM) {
            mcep.extend_from_slice(&row[..MCEP_DIM]);
            lf0.push(row[LF0_INDEX]);
            let flag = row[UV_INDEX];
            if flag.to_bits() == 0.0f32.to_bits() {
                uv.push(false);
            } else if flag.to_bits() == 1.0f32.to_bits() {
                uv.push(true);
            } else {
                return Err(Error::Input(format!("uv value {flag} is not 0 or 1")));
            }
            cap.extend_from_slice(&row[CAP_OFFSET..]);
        }
        Self::new(utt_id, mcep, lf0, uv, cap)
    }

    fn validate(&self) -> Result<()> {
        let n = self.lf0.len();
        if n == 0 {
            return Err(Error::Input(format!("utterance {} has no frames", self.utt_id)));
        }
        if self.mcep.len() != n * MCEP_DIM {
            return Err(Error::Shape(format!(
                "mcep has {} values, expected {n} x {MCEP_DIM}",
                self.mcep.len()
            )));
        }
        if self.uv.len() != n {
            return Err(Error::Shape(format!("uv has {} frames, expected {n}", self.uv.len())));
        }
        if self.cap.len() != n * CAP_DIM {
            return Err(Error::Shape(format!(
                "cap has {} values, expected {n} x {CAP_DIM}",
                self.cap.len()
            )));
        }
        let non_finite = |name: &str, v: &[f32]| -> Result<()> {
            match v.iter().position(|x| !x.is_finite()) {
                Some(i) => Err(Error::Input(format!(
                    "{name} value at index {i} of {} is not finite",
                    self.utt_id
                ))),
                None => Ok(()),
            }
        };
        non_finite("mcep", &self.mcep)?;
        non_finite("lf0", &self.lf0)?;
        non_finite("cap", &self.cap)?;
        Ok(())
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn set_utt_id(&mut self, id: impl Into<String>) {
        self.utt_id = id.into();
    }

    pub fn n_frames(&self) -> usize {
        self.lf0.len()
    }

    pub fn mcep(&self) -> &[f32] {
        &self.mcep
    }

    pub fn mcep_frame(&self, t: usize) -> &[f32] {
        &self.mcep[t * MCEP_DIM..(t + 1) * MCEP_DIM]
    }

    pub fn lf0(&self) -> &[f32] {
        &self.lf0
    }

    pub fn uv(&self) -> &[bool] {
        &self.uv
    }

    pub fn cap(&self) -> &[f32] {
        &self.cap
    }

    pub fn cap_frame(&self, t: usize) -> &[f32] {
        &self.cap[t * CAP_DIM..(t + 1) * CAP_DIM]
    }

    /// F0 in Hz for frame `t`, or `None` when unvoiced.
    pub fn f0_hz(&self, t: usize) -> Option<f64> {
        self.uv[t].then(|| (self.lf0[t] as f64).exp())
    }

    /// Returns a copy with the mel-cepstrum replaced; all other dims are kept
    /// verbatim.
    pub fn with_mcep(&self, mcep: Vec<f32>) -> Result<Self> {
        Self::new(
            self.utt_id.clone(),
            mcep,
            self.lf0.clone(),
            self.uv.clone(),
            self.cap.clone(),
        )
    }

    /// Returns a copy with the log-F0 track replaced.
    pub fn with_lf0(&self, lf0: Vec<f32>) -> Result<Self> {
        Self::new(
            self.utt_id.clone(),
            self.mcep.clone(),
            lf0,
            self.uv.clone(),
            self.cap.clone(),
        )
    }

    /// Keeps the first `n` frames.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_frames() {
            return Err(Error::Input(format!(
                "cannot truncate {} frames to {n}",
                self.n_frames()
            )));
        }
        Self::new(
            self.utt_id.clone(),
            self.mcep[..n * MCEP_DIM].to_vec(),
            self.lf0[..n].to_vec(),
            self.uv[..n].to_vec(),
            self.cap[..n * CAP_DIM].to_vec(),
        )
    }

    /// Writes frame `t` in full-frame order into `out` (length 50).
    pub fn write_frame(&self, t: usize, out: &mut [f32]) {
        out[..MCEP_DIM].copy_from_slice(self.mcep_frame(t));
        out[LF0_INDEX] = self.lf0[t];
        out[UV_INDEX] = if self.uv[t] { 1.0 } else { 0.0 };
        out[CAP_OFFSET..FRAME_DIM].copy_from_slice(self.cap_frame(t));
    }

    /// All frames concatenated in full-frame order.
    pub fn to_frames(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.n_frames() * FRAME_DIM];
        for (t, row) in out.chunks_exact_mut(FRAME_DIM).enumerate() {
            self.write_frame(t, row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> UtteranceFeatures {
        UtteranceFeatures::new(
            "u",
            vec![0.5; n * MCEP_DIM],
            vec![4.6; n],
            vec![true; n],
            vec![-10.0; n * CAP_DIM],
        )
        .unwrap()
    }

    #[test]
    fn frame_count_follows_shift() {
        assert_eq!(frame_count(24_000, 24_000), 201);
        assert_eq!(frame_count(96_000, 24_000), 801);
        assert_eq!(frame_count(119, 24_000), 1);
        assert_eq!(frame_count(120, 24_000), 2);
        assert_eq!(hop_size(24_000), 120);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let err = UtteranceFeatures::new("u", vec![0.0; 45], vec![0.0; 2], vec![false; 2], vec![0.0; 6]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = vec![0.0; 45];
        m[3] = f32::NAN;
        let err = UtteranceFeatures::new("u", m, vec![0.0], vec![false], vec![0.0; 3]);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn rejects_fractional_uv() {
        let mut frames = tiny(2).to_frames();
        frames[UV_INDEX] = 0.5;
        assert!(UtteranceFeatures::from_frames("u", &frames).is_err());
        frames[UV_INDEX] = -0.0;
        assert!(UtteranceFeatures::from_frames("u", &frames).is_err());
    }

    #[test]
    fn frame_layout_round_trips() {
        let f = tiny(3);
        let frames = f.to_frames();
        assert_eq!(frames.len(), 3 * FRAME_DIM);
        assert_eq!(frames[UV_INDEX], 1.0);
        assert_eq!(frames[LF0_INDEX], 4.6);
        assert_eq!(UtteranceFeatures::from_frames("u", &frames).unwrap(), f);
    }
}
