//! A deterministic stand-in for a low-cost statistical TTS system: it turns
//! natural features into over-smoothed, variance-reduced, slightly noisy
//! "synthetic" features with the same frame timing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{UtteranceFeatures, MCEP_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct DegradeConfig {
    /// Moving-average length over time for mcep, in frames (odd).
    pub smooth_window: usize,
    /// Shrink factor toward the utterance mean for mcep dims 1..45.
    pub variance_scale: f64,
    /// Moving-average length for lf0 (odd).
    pub lf0_smooth_window: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            smooth_window: 9,
            variance_scale: 0.6,
            lf0_smooth_window: 5,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl DegradeConfig {
    /// Settings under which [`degrade`] returns its input unchanged.
    pub fn identity() -> Self {
        DegradeConfig {
            smooth_window: 1,
            variance_scale: 1.0,
            lf0_smooth_window: 1,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("smooth_window", self.smooth_window),
            ("lf0_smooth_window", self.lf0_smooth_window),
        ] {
            if w == 0 || w % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 1, got {w}")));
            }
        }
        if !(0.0..=1.0).contains(&self.variance_scale) {
            return Err(Error::Config(format!(
                "variance_scale must lie in [0, 1], got {}",
                self.variance_scale
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

/// Centred moving average with edge replication. `get(t)` reads frame `t`.
fn moving_average(n: usize, window: usize, get: impl Fn(usize) -> f64) -> Vec<f64> {
    if window == 1 {
        return (0..n).map(get).collect();
    }
    let half = (window / 2) as isize;
    (0..n as isize)
        .map(|t| {
            let sum: f64 = (t - half..=t + half)
                .map(|i| get(i.clamp(0, n as isize - 1) as usize))
                .sum();
            sum / window as f64
        })
        .collect()
}

/// Degrades `y`; lf0 is smoothed, uv and cap pass through, the frame count is
/// unchanged. The noise stream is seeded from `cfg.seed`.
pub fn degrade(y: &UtteranceFeatures, cfg: &DegradeConfig) -> Result<UtteranceFeatures> {
    cfg.validate()?;
    let n = y.n_frames();
    let mut mcep = vec![0.0f32; n * MCEP_DIM];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let mut columns: Vec<Vec<f64>> = (0..MCEP_DIM)
        .map(|d| moving_average(n, cfg.smooth_window, |t| y.mcep_frame(t)[d] as f64))
        .collect();
    for col in columns.iter_mut().skip(1) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let g = cfg.variance_scale;
        for v in col.iter_mut() {
            // Written so that g = 1 and g = 0 are exact.
            *v = *v * g + mean * (1.0 - g);
        }
    }
    for t in 0..n {
        for (d, col) in columns.iter().enumerate() {
            let mut v = col[t];
            if d > 0 && cfg.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            mcep[t * MCEP_DIM + d] = v as f32;
        }
    }
    let lf0: Vec<f32> = moving_average(n, cfg.lf0_smooth_window, |t| y.lf0()[t] as f64)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    UtteranceFeatures::new(y.utt_id(), mcep, lf0, y.uv().to_vec(), y.cap().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::mcd_utterance;
    use crate::features::CAP_DIM;

    fn utt(n: usize) -> UtteranceFeatures {
        let mcep = (0..n * MCEP_DIM)
            .map(|i| ((i * 7919 % 1000) as f32 / 500.0 - 1.0) * 0.3)
            .collect();
        let lf0 = (0..n).map(|t| 4.8 + 0.1 * (t as f32 * 0.3).sin()).collect();
        let uv = (0..n).map(|t| t % 5 != 0).collect();
        let cap = vec![-12.5; n * CAP_DIM];
        UtteranceFeatures::new("u", mcep, lf0, uv, cap).unwrap()
    }

    #[test]
    fn identity_settings_are_exact() {
        let y = utt(40);
        assert_eq!(degrade(&y, &DegradeConfig::identity()).unwrap(), y);
    }

    #[test]
    fn full_shrinkage_collapses_to_mean() {
        let y = utt(30);
        let cfg = DegradeConfig {
            variance_scale: 0.0,
            ..DegradeConfig::identity()
        };
        let s = degrade(&y, &cfg).unwrap();
        for d in 1..MCEP_DIM {
            let first = s.mcep_frame(0)[d];
            assert!((0..30).all(|t| s.mcep_frame(t)[d] == first));
            let mean = (0..30).map(|t| y.mcep_frame(t)[d] as f64).sum::<f64>() / 30.0;
            assert!((first as f64 - mean).abs() < 1e-6);
        }
        // The energy term is not shrunk.
        assert_eq!(
            (0..30).map(|t| s.mcep_frame(t)[0]).collect::<Vec<_>>(),
            (0..30).map(|t| y.mcep_frame(t)[0]).collect::<Vec<_>>()
        );
    }

    #[test]
    fn distortion_grows_as_shrinkage_increases() {
        let y = utt(50);
        let mut last = -1.0;
        for g in [1.0, 0.8, 0.6, 0.4] {
            let cfg = DegradeConfig {
                variance_scale: g,
                ..DegradeConfig::identity()
            };
            let d = mcd_utterance(&degrade(&y, &cfg).unwrap(), &y).unwrap();
            assert!(d >= last, "gamma {g}: {d} < {last}");
            last = d;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn preserves_timing_and_passthrough_dims() {
        let y = utt(25);
        let s = degrade(&y, &DegradeConfig::default()).unwrap();
        assert_eq!(s.n_frames(), y.n_frames());
        assert_eq!(s.uv(), y.uv());
        assert_eq!(s.cap(), y.cap());
        assert_eq!(s, degrade(&y, &DegradeConfig::default()).unwrap());
    }

    #[test]
    fn even_window_is_a_config_error() {
        let cfg = DegradeConfig {
            smooth_window: 4,
            ..DegradeConfig::default()
        };
        assert!(matches!(degrade(&utt(5), &cfg), Err(Error::Config(_))));
    }
}
