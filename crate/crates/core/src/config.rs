//! Flat `key = value` run configuration shared by every CLI stage.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::SAMPLE_RATE;
use crate::train::{OptimizerKind, TrainConfig};
use crate::ttsim::DegradeConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fs: u32,
    pub train: TrainConfig,
    pub degrade: DegradeConfig,
    /// Fraction of utterances (last in id order) held out for testing.
    pub test_fraction: f64,
    /// Minimum gap, in dB, demanded by the ordering checks of the report.
    pub margin_db: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            fs: SAMPLE_RATE,
            train: TrainConfig::default(),
            degrade: DegradeConfig::default(),
            test_fraction: 0.2,
            margin_db: 0.1,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "fs",
    "seed",
    "epochs",
    "rho",
    "learning_rate",
    "optimizer",
    "adam_eps",
    "teacher_forcing",
    "in_conv_layers",
    "in_channels",
    "kernel",
    "gru_hidden",
    "out_conv_layers",
    "residual",
    "smooth_window",
    "variance_scale",
    "lf0_smooth_window",
    "noise_std",
    "test_fraction",
    "margin_db",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            cfg.set(key, value.trim())?;
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Overrides one key. Values are not cross-validated until [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let d = &mut self.degrade;
        match key {
            "fs" => self.fs = parse(key, value)?,
            "seed" => {
                t.seed = parse(key, value)?;
                d.seed = t.seed;
            }
            "epochs" => t.epochs = parse(key, value)?,
            "rho" => t.rho = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "optimizer" => t.optimizer = OptimizerKind::from_str(value)?,
            "adam_eps" => t.adam_eps = parse(key, value)?,
            "teacher_forcing" => t.teacher_forcing = parse(key, value)?,
            "in_conv_layers" => t.arch.in_conv_layers = parse(key, value)?,
            "in_channels" => t.arch.in_channels = parse(key, value)?,
            "kernel" => t.arch.kernel = parse(key, value)?,
            "gru_hidden" => t.arch.gru_hidden = parse(key, value)?,
            "out_conv_layers" => t.arch.out_conv_layers = parse(key, value)?,
            "residual" => t.arch.residual = parse(key, value)?,
            "smooth_window" => d.smooth_window = parse(key, value)?,
            "variance_scale" => d.variance_scale = parse(key, value)?,
            "lf0_smooth_window" => d.lf0_smooth_window = parse(key, value)?,
            "noise_std" => d.noise_std = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "margin_db" => self.margin_db = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fs != SAMPLE_RATE {
            return Err(Error::Config(format!("unsupported fs {} (only {SAMPLE_RATE})", self.fs)));
        }
        self.train.validate()?;
        self.degrade.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.margin_db >= 0.0 && self.margin_db.is_finite()) {
            return Err(Error::Config(format!("margin_db must be >= 0, got {}", self.margin_db)));
        }
        Ok(())
    }

    /// Every key with its effective value, one per line in [`KEYS`] order.
    /// The output parses back to an identical config.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let d = &self.degrade;
        let values: [String; 20] = [
            self.fs.to_string(),
            t.seed.to_string(),
            t.epochs.to_string(),
            t.rho.to_string(),
            t.learning_rate.to_string(),
            t.optimizer.as_str().to_string(),
            t.adam_eps.to_string(),
            t.teacher_forcing.to_string(),
            t.arch.in_conv_layers.to_string(),
            t.arch.in_channels.to_string(),
            t.arch.kernel.to_string(),
            t.arch.gru_hidden.to_string(),
            t.arch.out_conv_layers.to_string(),
            t.arch.residual.to_string(),
            d.smooth_window.to_string(),
            d.variance_scale.to_string(),
            d.lf0_smooth_window.to_string(),
            d.noise_std.to_string(),
            self.test_fraction.to_string(),
            self.margin_db.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["epochs=3", "rho=0.5", "residual=false", "seed=9"]).unwrap();
        let back = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.degrade.seed, 9);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("epochs = 1\nepochs = 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("epochs"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("epochs = x"), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse("# header\n\nepochs = 4 # inline\n").unwrap();
        assert_eq!(cfg.train.epochs, 4);
    }

    #[test]
    fn unsupported_fs() {
        let err = RunConfig::parse("fs = 16000").unwrap_err();
        assert!(err.to_string().contains("unsupported fs"), "{err}");
    }
}
