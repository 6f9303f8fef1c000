//! Pairing synthetic/natural utterances and the cycle-VC training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::format::parse_manifest;
use crate::features::{compute_norm_stats, normalize, read_features, Domain, UtteranceFeatures};
use crate::model::{Arch, CycleVcModel, LossBreakdown, DEFAULT_RHO};

pub use crate::model::checkpoint::{load_model, save_model};

/// Largest frame-count difference reconciled by trimming.
pub const MAX_TRIM_FRAMES: usize = 2;

/// A frame-aligned (synthetic, natural) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedUtterance {
    pub utt_id: String,
    /// Synthetic features (conversion source).
    pub src: UtteranceFeatures,
    /// Natural features (conversion target).
    pub tgt: UtteranceFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimRecord {
    pub utt_id: String,
    pub natural_frames: usize,
    pub synthetic_frames: usize,
    pub trimmed_to: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairingReport {
    pub pairs: usize,
    pub trims: Vec<TrimRecord>,
}

/// Truncates the longer of two utterances when they differ by at most
/// [`MAX_TRIM_FRAMES`]; a larger difference is a temporal-mismatch error.
pub fn trim_pair(
    a: &UtteranceFeatures,
    b: &UtteranceFeatures,
) -> Result<(UtteranceFeatures, UtteranceFeatures)> {
    let (na, nb) = (a.n_frames(), b.n_frames());
    if na.abs_diff(nb) > MAX_TRIM_FRAMES {
        return Err(Error::Pairing(format!(
            "temporal mismatch for {}: {na} vs {nb} frames",
            a.utt_id()
        )));
    }
    let n = na.min(nb);
    let cut = |f: &UtteranceFeatures| if f.n_frames() == n { Ok(f.clone()) } else { f.truncated(n) };
    Ok((cut(a)?, cut(b)?))
}

impl PairedUtterance {
    /// Pairs `synthetic` with `natural`, trimming per [`trim_pair`].
    pub fn new(
        utt_id: impl Into<String>,
        synthetic: UtteranceFeatures,
        natural: UtteranceFeatures,
    ) -> Result<(Self, Option<TrimRecord>)> {
        let utt_id = utt_id.into();
        let (ns, nn) = (synthetic.n_frames(), natural.n_frames());
        let (src, tgt) = trim_pair(&synthetic, &natural).map_err(|_| {
            Error::Pairing(format!("temporal mismatch for {utt_id}: natural {nn} vs synthetic {ns} frames"))
        })?;
        let record = (ns != nn).then(|| TrimRecord {
            utt_id: utt_id.clone(),
            natural_frames: nn,
            synthetic_frames: ns,
            trimmed_to: src.n_frames(),
        });
        Ok((PairedUtterance { utt_id, src, tgt }, record))
    }
}

/// Loads every manifest entry. Relative paths resolve against the
/// manifest's directory.
pub fn pair_dataset(manifest_path: impl AsRef<Path>) -> Result<(Vec<PairedUtterance>, PairingReport)> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let entries = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let loaded: Vec<(UtteranceFeatures, UtteranceFeatures)> = entries
        .par_iter()
        .map(|e| -> Result<_> {
            let mut nat = read_features(base.join(&e.natural))?;
            let mut syn = read_features(base.join(&e.synthetic))?;
            nat.set_utt_id(&e.utt_id);
            syn.set_utt_id(&e.utt_id);
            Ok((nat, syn))
        })
        .collect::<Result<_>>()?;
    pair_features(entries.iter().map(|e| e.utt_id.clone()).zip(loaded))
}

/// Pairs already-loaded `(natural, synthetic)` features.
pub fn pair_features(
    items: impl IntoIterator<Item = (String, (UtteranceFeatures, UtteranceFeatures))>,
) -> Result<(Vec<PairedUtterance>, PairingReport)> {
    let mut pairs = Vec::new();
    let mut report = PairingReport::default();
    for (id, (nat, syn)) in items {
        let (pair, trim) = PairedUtterance::new(id, syn, nat)?;
        report.trims.extend(trim);
        pairs.push(pair);
    }
    report.pairs = pairs.len();
    Ok((pairs, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rho: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Denominator offset of the adaptive-moment update.
    pub adam_eps: f64,
    pub teacher_forcing: bool,
    pub arch: Arch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            rho: DEFAULT_RHO,
            learning_rate: 1e-4,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            adam_eps: 1e-8,
            teacher_forcing: false,
            arch: Arch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        self.arch.validate()
    }
}

/// Mean losses of one epoch, measured before each step's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CycleVcModel,
    pub curve: Vec<EpochLoss>,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;

    fn new(cfg: &TrainConfig, n: usize) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            eps: cfg.adam_eps,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Updates `params` in place; results are kept at f32 precision.
    fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let mut i = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pj, &gj) in p.iter_mut().zip(g.iter()) {
                let delta = match self.kind {
                    OptimizerKind::Sgd => self.lr * gj,
                    OptimizerKind::Adam => {
                        let m = &mut self.m[i];
                        let v = &mut self.v[i];
                        *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gj;
                        *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gj * gj;
                        self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps)
                    }
                };
                *pj = (*pj - delta) as f32 as f64;
                i += 1;
            }
        }
    }
}

/// Trains a fresh model on `pairs`. Normalization statistics come from the
/// training pairs only (synthetic side for the source, natural side for the
/// target). Utterances are visited in `utt_id` order shuffled by a generator
/// seeded from `config.seed`, one utterance per update.
pub fn train(pairs: &[PairedUtterance], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(pairs, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress(
    pairs: &[PairedUtterance],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Input("training needs at least one pair".into()));
    }
    let mut sorted: Vec<&PairedUtterance> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    let src_set: Vec<UtteranceFeatures> = sorted.iter().map(|p| p.src.clone()).collect();
    let tgt_set: Vec<UtteranceFeatures> = sorted.iter().map(|p| p.tgt.clone()).collect();
    let norm_src = compute_norm_stats(&src_set, Domain::Source)?;
    let norm_tgt = compute_norm_stats(&tgt_set, Domain::Target)?;
    let data: Vec<(String, Vec<f64>, Vec<f64>)> = sorted
        .iter()
        .map(|p| (p.utt_id.clone(), normalize(&p.src, &norm_src), normalize(&p.tgt, &norm_tgt)))
        .collect();

    let mut model = CycleVcModel::init(config.arch, norm_src, norm_tgt, config.seed)?;
    let mut opt = Optimizer::new(config, 2 * model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut s, mut c) = (0.0, 0.0);
        for &i in &order {
            let (id, x, y) = &data[i];
            let (loss, grads) = model.loss_gradients_with(x, y, config.rho, config.teacher_forcing)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    utt_id: id.clone(),
                    detail: format!("{loss:?}"),
                });
            }
            if grads.theta.iter().chain(&grads.phi).any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    utt_id: id.clone(),
                    detail: "non-finite gradient".into(),
                });
            }
            s += loss.stot_l1;
            c += loss.cycle_l1;
            opt.apply(
                &mut [model.theta.as_mut_slice(), model.phi.as_mut_slice()],
                &[&grads.theta, &grads.phi],
            );
            if !model.all_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    utt_id: id.clone(),
                    detail: "parameter update produced a non-finite value".into(),
                });
            }
        }
        let n = order.len() as f64;
        let entry = EpochLoss {
            epoch,
            loss: LossBreakdown::new(s / n, c / n, config.rho),
        };
        on_epoch(&entry);
        curve.push(entry);
    }
    Ok(TrainOutcome { model, curve })
}

/// `epoch<TAB>stot_l1<TAB>cycle_l1<TAB>total`, one line per epoch after a
/// header line.
pub fn loss_curve_tsv(curve: &[EpochLoss]) -> String {
    let mut out = String::from("epoch\tstot_l1\tcycle_l1\ttotal\n");
    for e in curve {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.epoch, e.loss.stot_l1, e.loss.cycle_l1, e.loss.total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{write_features, CAP_DIM, MCEP_DIM};

    fn utt(id: &str, n: usize, offset: f32) -> UtteranceFeatures {
        let mcep = (0..n * MCEP_DIM).map(|i| ((i % 17) as f32 * 0.1 + offset).sin()).collect();
        UtteranceFeatures::new(id, mcep, vec![4.7; n], vec![true; n], vec![-8.0; n * CAP_DIM]).unwrap()
    }

    #[test]
    fn equal_lengths_are_untouched() {
        let (p, trim) = PairedUtterance::new("a", utt("a", 10, 0.0), utt("a", 10, 0.5)).unwrap();
        assert!(trim.is_none());
        assert_eq!(p.src.n_frames(), 10);
    }

    #[test]
    fn off_by_one_is_trimmed_and_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_features(&utt("a", 801, 0.0), dir.path().join("nat_a.cvf")).unwrap();
        write_features(&utt("a", 800, 0.3), dir.path().join("syn_a.cvf")).unwrap();
        let manifest = dir.path().join("m.tsv");
        std::fs::write(&manifest, "a\tnat_a.cvf\tsyn_a.cvf\n").unwrap();
        let (pairs, report) = pair_dataset(&manifest).unwrap();
        assert_eq!(pairs[0].src.n_frames(), 800);
        assert_eq!(pairs[0].tgt.n_frames(), 800);
        assert_eq!(
            report.trims,
            vec![TrimRecord {
                utt_id: "a".into(),
                natural_frames: 801,
                synthetic_frames: 800,
                trimmed_to: 800
            }]
        );
    }

    #[test]
    fn large_mismatch_is_an_error() {
        let err = PairedUtterance::new("a", utt("a", 700, 0.0), utt("a", 801, 0.0)).unwrap_err();
        assert!(err.to_string().contains("temporal mismatch"), "{err}");
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 15);
        assert_eq!(c.rho, 1e-8);
        assert!(!c.teacher_forcing);
    }

    #[test]
    fn loss_curve_format() {
        let curve = [EpochLoss {
            epoch: 1,
            loss: LossBreakdown::new(0.5, 0.25, 0.5),
        }];
        assert_eq!(loss_curve_tsv(&curve), "epoch\tstot_l1\tcycle_l1\ttotal\n1\t0.5\t0.25\t0.625\n");
    }
}
