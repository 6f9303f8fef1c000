use super::{UtteranceFeatures, FRAME_DIM, MCEP_DIM};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Which side of the conversion a set of statistics describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Synthetic (TTS) features.
    Source,
    /// Natural features.
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// Per-dimension mean and standard deviation over full frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub domain: Domain,
}

impl NormStats {
    /// Mean 0, std 1: normalization is the identity.
    pub fn identity(domain: Domain) -> Self {
        NormStats {
            mean: vec![0.0; FRAME_DIM],
            std: vec![1.0; FRAME_DIM],
            domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FRAME_DIM || self.std.len() != FRAME_DIM {
            return Err(Error::Shape(format!(
                "norm stats need {FRAME_DIM} dims, got mean {} / std {}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite())
            || self.std.iter().any(|&s| !(s.is_finite() && s > 0.0))
        {
            return Err(Error::Input("norm stats must be finite with std > 0".into()));
        }
        Ok(())
    }
}

/// Population statistics over every frame of `set`; std is floored at
/// [`STD_FLOOR`].
pub fn compute_norm_stats(set: &[UtteranceFeatures], domain: Domain) -> Result<NormStats> {
    let total: usize = set.iter().map(|f| f.n_frames()).sum();
    if total == 0 {
        return Err(Error::Input("cannot compute statistics of an empty set".into()));
    }
    let mut sum = vec![0.0f64; FRAME_DIM];
    let mut frame = vec![0.0f32; FRAME_DIM];
    for f in set {
        for t in 0..f.n_frames() {
            f.write_frame(t, &mut frame);
            for (s, &v) in sum.iter_mut().zip(&frame) {
                *s += v as f64;
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / total as f64).collect();
    // Two-pass variance.
    let mut sq = vec![0.0f64; FRAME_DIM];
    for f in set {
        for t in 0..f.n_frames() {
            f.write_frame(t, &mut frame);
            for ((s, &v), m) in sq.iter_mut().zip(&frame).zip(&mean) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
    }
    let std = sq
        .iter()
        .map(|s| (s / total as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std, domain })
}

/// Normalized full frames, row-major `n x 50`.
pub fn normalize(feat: &UtteranceFeatures, stats: &NormStats) -> Vec<f64> {
    let mut out = Vec::with_capacity(feat.n_frames() * FRAME_DIM);
    let mut frame = vec![0.0f32; FRAME_DIM];
    for t in 0..feat.n_frames() {
        feat.write_frame(t, &mut frame);
        for ((&v, m), s) in frame.iter().zip(&stats.mean).zip(&stats.std) {
            out.push((v as f64 - m) / s);
        }
    }
    out
}

/// Maps normalized mcep rows (`n x 45`) back to feature units.
pub fn denormalize_mcep(mcep_norm: &[f64], stats: &NormStats) -> Vec<f32> {
    mcep_norm
        .chunks_exact(MCEP_DIM)
        .flat_map(|row| {
            row.iter()
                .zip(&stats.mean)
                .zip(&stats.std)
                .map(|((&v, m), s)| (v * s + m) as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CAP_DIM, LF0_INDEX};

    fn utt(id: &str, mcep0: &[f32]) -> UtteranceFeatures {
        let n = mcep0.len();
        let mut mcep = vec![0.25; n * MCEP_DIM];
        for (t, &v) in mcep0.iter().enumerate() {
            mcep[t * MCEP_DIM] = v;
        }
        let lf0 = (0..n).map(|t| 4.0 + t as f32).collect();
        UtteranceFeatures::new(id, mcep, lf0, vec![true; n], vec![-5.0; n * CAP_DIM]).unwrap()
    }

    #[test]
    fn hand_computed_stats() {
        // dim 0 over all frames: 1, 2, 3, 6 -> mean 3, var (4+1+0+9)/4 = 3.5
        let set = [utt("a", &[1.0, 2.0]), utt("b", &[3.0, 6.0])];
        let s = compute_norm_stats(&set, Domain::Target).unwrap();
        assert!((s.mean[0] - 3.0).abs() < 1e-12);
        assert!((s.std[0] - 3.5f64.sqrt()).abs() < 1e-12);
        // lf0: 4, 5, 4, 5 -> mean 4.5, std 0.5
        assert!((s.mean[LF0_INDEX] - 4.5).abs() < 1e-12);
        assert!((s.std[LF0_INDEX] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_dim_is_floored() {
        let set = [utt("a", &[1.0, 2.0])];
        let s = compute_norm_stats(&set, Domain::Source).unwrap();
        assert_eq!(s.std[1], STD_FLOOR);
        let norm = normalize(&set[0], &s);
        assert_eq!(norm[1], 0.0);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(compute_norm_stats(&[], Domain::Source), Err(Error::Input(_))));
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let set = [utt("a", &[1.0, -2.0, 7.5]), utt("b", &[0.3, 0.1])];
        let s = compute_norm_stats(&set, Domain::Target).unwrap();
        for f in &set {
            let norm = normalize(f, &s);
            let mc: Vec<f64> = norm
                .chunks_exact(FRAME_DIM)
                .flat_map(|r| r[..MCEP_DIM].to_vec())
                .collect();
            let back = denormalize_mcep(&mc, &s);
            for (a, b) in back.iter().zip(f.mcep()) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
            }
        }
    }
}
