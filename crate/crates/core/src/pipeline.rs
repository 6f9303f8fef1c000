//! Vocoder-training and post-filter data flows: pseudo-converted features
//! for vocoder training, enhanced features for testing, and vocoding
//! through a pluggable backend.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::format::{write_features, EXTENSION};
use crate::features::{denormalize_mcep, normalize, synthesize, UtteranceFeatures};
use crate::model::CycleVcModel;
use crate::wav;

/// A waveform generator conditioned on acoustic features.
pub trait VocoderBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Renders `feat`; must be deterministic and last `n_frames * 5 ms`
    /// within one frame.
    fn generate(&self, feat: &UtteranceFeatures, fs: u32) -> Result<Vec<f32>>;

    /// Fits the backend to (features, waveform) pairs. Backends without
    /// trainable state keep the default no-op.
    fn train(&mut self, _pairs: &[(UtteranceFeatures, Vec<f32>)]) -> Result<()> {
        Ok(())
    }
}

/// Source-filter resynthesis; has nothing to train.
#[derive(Debug, Clone, Default)]
pub struct ResynthesisVocoder;

impl VocoderBackend for ResynthesisVocoder {
    fn name(&self) -> &str {
        "resynthesis"
    }

    fn generate(&self, feat: &UtteranceFeatures, fs: u32) -> Result<Vec<f32>> {
        synthesize(feat, fs)
    }
}

/// Natural features with their mcep replaced by the self-conversion
/// `f(g(Y))`. Frame count, lf0, uv and cap are copied from `y`.
pub fn generate_pseudo(model: &CycleVcModel, y: &UtteranceFeatures) -> Result<UtteranceFeatures> {
    let y_norm = normalize(y, &model.norm_tgt);
    let out = model.cycle_path(&y_norm)?;
    y.with_mcep(denormalize_mcep(&out, &model.norm_tgt))
}

/// Synthetic features with their mcep replaced by `f(X)`; other dims are
/// copied from `x`.
pub fn enhance(model: &CycleVcModel, x: &UtteranceFeatures) -> Result<UtteranceFeatures> {
    let x_norm = normalize(x, &model.norm_src);
    let out = model.stot_forward(&x_norm)?;
    x.with_mcep(denormalize_mcep(&out, &model.norm_tgt))
}

/// Vocoder train/test combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    /// Trained on natural features, tested on natural features.
    Natural,
    /// Trained on natural features, tested on synthetic features.
    AcousticMismatch,
    /// Trained on synthetic features, tested on synthetic features.
    TemporalMismatch,
    /// Trained on pseudo-converted features, tested on enhanced features.
    PostFilter,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Natural,
        Scenario::AcousticMismatch,
        Scenario::TemporalMismatch,
        Scenario::PostFilter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Natural => "natural",
            Scenario::AcousticMismatch => "am",
            Scenario::TemporalMismatch => "tm",
            Scenario::PostFilter => "npf",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?} (natural, am, tm, npf)")))
    }
}

/// Everything a scenario may draw on. Training sets pair features with the
/// natural waveforms of the same utterances.
#[derive(Default)]
pub struct ScenarioAssets {
    pub fs: u32,
    pub natural_train: Option<Vec<UtteranceFeatures>>,
    pub synthetic_train: Option<Vec<UtteranceFeatures>>,
    pub pseudo_train: Option<Vec<UtteranceFeatures>>,
    /// Natural training waveforms, in the same order as the training sets.
    pub train_waveforms: Option<Vec<Vec<f32>>>,
    pub natural_test: Option<Vec<UtteranceFeatures>>,
    pub synthetic_test: Option<Vec<UtteranceFeatures>>,
    pub enhanced_test: Option<Vec<UtteranceFeatures>>,
}

/// One generated utterance of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub utt_id: String,
    pub scenario: Scenario,
    pub feature_path: PathBuf,
    pub wav_path: PathBuf,
    pub n_samples: usize,
}

fn require<'a, T>(asset: &'a Option<T>, what: &str, scenario: Scenario) -> Result<&'a T> {
    asset.as_ref().ok_or_else(|| {
        Error::Config(format!("scenario {} needs {what}, which was not provided", scenario.as_str()))
    })
}

/// Trains a backend on the scenario's training features, vocodes its test
/// features, and writes `<out>/<scenario>/{feats,wav}/` plus
/// `<out>/<scenario>/manifest.tsv`. Paths in the manifest are relative to
/// `out`.
pub fn run_scenario(
    scenario: Scenario,
    assets: &ScenarioAssets,
    backend: &mut dyn VocoderBackend,
    out: impl AsRef<Path>,
) -> Result<Vec<ScenarioOutput>> {
    let (train_feats, test_feats) = match scenario {
        Scenario::Natural => (
            require(&assets.natural_train, "natural training features", scenario)?,
            require(&assets.natural_test, "natural test features", scenario)?,
        ),
        Scenario::AcousticMismatch => (
            require(&assets.natural_train, "natural training features", scenario)?,
            require(&assets.synthetic_test, "synthetic test features", scenario)?,
        ),
        Scenario::TemporalMismatch => (
            require(&assets.synthetic_train, "synthetic training features", scenario)?,
            require(&assets.synthetic_test, "synthetic test features", scenario)?,
        ),
        Scenario::PostFilter => (
            require(&assets.pseudo_train, "pseudo-converted training features", scenario)?,
            require(&assets.enhanced_test, "enhanced test features", scenario)?,
        ),
    };
    let waves = require(&assets.train_waveforms, "natural training waveforms", scenario)?;
    if waves.len() != train_feats.len() {
        return Err(Error::Config(format!(
            "scenario {}: {} training feature files but {} waveforms",
            scenario.as_str(),
            train_feats.len(),
            waves.len()
        )));
    }
    let pairs: Vec<(UtteranceFeatures, Vec<f32>)> =
        train_feats.iter().cloned().zip(waves.iter().cloned()).collect();
    backend.train(&pairs)?;

    let out = out.as_ref();
    let rel_dir = PathBuf::from(scenario.as_str());
    for sub in ["feats", "wav"] {
        let d = out.join(&rel_dir).join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let backend: &dyn VocoderBackend = backend;
    let mut sorted: Vec<&UtteranceFeatures> = test_feats.iter().collect();
    sorted.sort_by(|a, b| a.utt_id().cmp(b.utt_id()));
    let outputs: Vec<ScenarioOutput> = sorted
        .par_iter()
        .map(|feat| -> Result<ScenarioOutput> {
            let wave = backend.generate(feat, assets.fs)?;
            let feature_path = rel_dir.join("feats").join(format!("{}.{EXTENSION}", feat.utt_id()));
            let wav_path = rel_dir.join("wav").join(format!("{}.wav", feat.utt_id()));
            write_features(feat, out.join(&feature_path))?;
            wav::write_wav(out.join(&wav_path), &wave, assets.fs)?;
            Ok(ScenarioOutput {
                utt_id: feat.utt_id().to_string(),
                scenario,
                feature_path,
                wav_path,
                n_samples: wave.len(),
            })
        })
        .collect::<Result<_>>()?;

    let manifest = out.join(&rel_dir).join("manifest.tsv");
    fs::write(&manifest, scenario_manifest(&outputs)).map_err(|e| Error::io(&manifest, e))?;
    Ok(outputs)
}

/// `utt_id<TAB>scenario<TAB>feature_path<TAB>wav_path` lines.
pub fn scenario_manifest(outputs: &[ScenarioOutput]) -> String {
    outputs
        .iter()
        .map(|o| {
            format!(
                "{}\t{}\t{}\t{}\n",
                o.utt_id,
                o.scenario.as_str(),
                o.feature_path.display(),
                o.wav_path.display()
            )
        })
        .collect()
}
