//! `cyclevc`: command-line front end of the post-filter pipeline.
//!
//! Settings resolve in this order, later winning: built-in defaults,
//! `--config` file, `--set key=value` overrides, dedicated flags such as
//! `--epochs`. Every command writes `run.log` under `--out` with the
//! effective configuration.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 internal error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cyclevc::config::RunConfig;
use cyclevc::corpus;
use cyclevc::eval::{emit_plane, mcd_plane, mcd_utterance, Label};
use cyclevc::experiment::{self, degrade_seed, Recording};
use cyclevc::features::analysis::analyze;
use cyclevc::features::format::{format_manifest, read_feature_dir, write_feature_dir, write_features, ManifestEntry, EXTENSION};
use cyclevc::features::synthesize;
use cyclevc::model::checkpoint::load_model;
use cyclevc::pipeline::{enhance, generate_pseudo, run_scenario, ResynthesisVocoder, Scenario, ScenarioAssets};
use cyclevc::train::{loss_curve_tsv, pair_dataset, save_model, train_with_progress};
use cyclevc::ttsim::{degrade, DegradeConfig};
use cyclevc::{wav, Error, Result, UtteranceFeatures};

#[derive(Parser)]
#[command(name = "cyclevc", version, about = "Cycle-consistent spectral post-filter for TTS vocoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Directory receiving every output of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampling rate override.
    #[arg(long, global = true)]
    fs: Option<u32>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a directory of WAV files into feature files.
    Extract {
        #[arg(long)]
        wav_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Degrade natural features into simulated TTS features and write a
    /// training manifest.
    Simulate {
        #[arg(long)]
        feats: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the converter pair on a manifest.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Pseudo-converted features f(g(Y)) from natural features.
    Pseudo {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        feats: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Enhanced features f(X) from synthetic features.
    Enhance {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        feats: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render one vocoder scenario (natural, am, tm, npf).
    Scenario {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        natural_train: Option<PathBuf>,
        #[arg(long)]
        synthetic_train: Option<PathBuf>,
        #[arg(long)]
        pseudo_train: Option<PathBuf>,
        /// Natural training waveforms, `<utt_id>.wav`.
        #[arg(long)]
        train_wav: Option<PathBuf>,
        #[arg(long)]
        natural_test: Option<PathBuf>,
        #[arg(long)]
        synthetic_test: Option<PathBuf>,
        #[arg(long)]
        enhanced_test: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean MCD between two feature directories.
    Mcd {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// MCD plane of the N, S, P and E feature sets.
    Plane {
        #[arg(long)]
        n: Option<PathBuf>,
        #[arg(long)]
        s: Option<PathBuf>,
        #[arg(long)]
        p: Option<PathBuf>,
        #[arg(long)]
        e: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Resynthesize waveforms from feature files.
    Synth {
        #[arg(long)]
        feats: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate the synthetic speech fixture corpus.
    Corpus {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage end to end on a corpus of WAV files.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Print the planned stages and exit without touching the disk.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn need<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Input(format!("missing required flag {flag}")))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Input(format!("{}: {e}", path.display()))
}

impl Common {
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        let mut flags: Vec<String> = Vec::new();
        if let Some(fs) = self.fs {
            flags.push(format!("fs={fs}"));
        }
        if let Some(seed) = self.seed {
            flags.push(format!("seed={seed}"));
        }
        for (k, v) in extra {
            if let Some(v) = v {
                flags.push(format!("{k}={v}"));
            }
        }
        cfg.apply_overrides(&flags)?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = need(&self.out, "--out")?;
        fs::create_dir_all(out).map_err(io_err(out))?;
        Ok(out)
    }
}

fn write_log(out: &Path, command: &str, cfg: &RunConfig, body: &str) -> Result<()> {
    let mut log = format!("command = {command}\n# effective config\n");
    log.push_str(&cfg.echo());
    log.push_str(body);
    let path = out.join("run.log");
    fs::write(&path, log).map_err(io_err(&path))
}

fn wav_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Input(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

fn read_waves(dir: &Path, fs_expected: u32) -> Result<Vec<Recording>> {
    wav_files(dir)?
        .into_iter()
        .map(|(utt_id, path)| {
            let (waveform, fs) = wav::read_wav(&path)?;
            if fs != fs_expected {
                return Err(Error::Config(format!(
                    "unsupported fs {fs} in {} (expected {fs_expected})",
                    path.display()
                )));
            }
            Ok(Recording { utt_id, waveform })
        })
        .collect()
}

fn load_feats(dir: &Path) -> Result<Vec<UtteranceFeatures>> {
    let feats = read_feature_dir(dir)?;
    if feats.is_empty() {
        return Err(Error::Input(format!("no .{EXTENSION} files in {}", dir.display())));
    }
    Ok(feats)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract { wav_dir, common } => {
            let cfg = common.resolve(&[])?;
            let dir = need(&wav_dir, "--wav-dir")?;
            let out = common.out_dir()?;
            let recs = read_waves(dir, cfg.fs)?;
            for r in &recs {
                let feat = analyze(&r.utt_id, &r.waveform, cfg.fs)?;
                write_features(&feat, out.join(format!("{}.{EXTENSION}", r.utt_id)))?;
            }
            write_log(out, "extract", &cfg, &format!("extracted {}\n", recs.len()))
        }
        Command::Simulate { feats, common } => {
            let cfg = common.resolve(&[])?;
            let dir = need(&feats, "--feats")?;
            let out = common.out_dir()?;
            let natural = load_feats(dir)?;
            let abs_dir = fs::canonicalize(dir).map_err(io_err(dir))?;
            let mut entries = Vec::new();
            for n in &natural {
                let dc = DegradeConfig {
                    seed: degrade_seed(cfg.degrade.seed, n.utt_id()),
                    ..cfg.degrade.clone()
                };
                let s = degrade(n, &dc)?;
                let name = format!("{}.{EXTENSION}", n.utt_id());
                write_features(&s, out.join(&name))?;
                entries.push(ManifestEntry {
                    utt_id: n.utt_id().to_string(),
                    natural: abs_dir.join(&name),
                    synthetic: PathBuf::from(&name),
                });
            }
            let manifest = out.join("manifest.tsv");
            fs::write(&manifest, format_manifest(&entries)).map_err(io_err(&manifest))?;
            write_log(out, "simulate", &cfg, &format!("simulated {}\n", natural.len()))
        }
        Command::Train {
            manifest,
            epochs,
            rho,
            learning_rate,
            common,
        } => {
            let cfg = common.resolve(&[
                ("epochs", epochs.map(|v| v.to_string())),
                ("rho", rho.map(|v| v.to_string())),
                ("learning_rate", learning_rate.map(|v| v.to_string())),
            ])?;
            let manifest = need(&manifest, "--manifest")?;
            let out = common.out_dir()?;
            let (pairs, report) = pair_dataset(manifest)?;
            let mut body = String::new();
            for t in &report.trims {
                let _ = writeln!(
                    body,
                    "trim {}: natural {} synthetic {} -> {}",
                    t.utt_id, t.natural_frames, t.synthetic_frames, t.trimmed_to
                );
            }
            let outcome = train_with_progress(&pairs, &cfg.train, |e| {
                eprintln!("epoch {} total {:.6}", e.epoch, e.loss.total);
            })?;
            save_model(&outcome.model, out.join("model.ckpt"))?;
            let loss = out.join("loss.tsv");
            fs::write(&loss, loss_curve_tsv(&outcome.curve)).map_err(io_err(&loss))?;
            let _ = writeln!(body, "pairs {}", report.pairs);
            write_log(out, "train", &cfg, &body)
        }
        Command::Pseudo { model, feats, common } => convert("pseudo", model, feats, common, generate_pseudo),
        Command::Enhance { model, feats, common } => convert("enhance", model, feats, common, enhance),
        Command::Scenario {
            scenario,
            natural_train,
            synthetic_train,
            pseudo_train,
            train_wav,
            natural_test,
            synthetic_test,
            enhanced_test,
            common,
        } => {
            let cfg = common.resolve(&[])?;
            let name = scenario.ok_or_else(|| Error::Input("missing required flag --scenario".into()))?;
            let sc: Scenario = name.parse()?;
            let out = common.out_dir()?;
            let opt = |d: &Option<PathBuf>| d.as_deref().map(load_feats).transpose();
            let assets = ScenarioAssets {
                fs: cfg.fs,
                natural_train: opt(&natural_train)?,
                synthetic_train: opt(&synthetic_train)?,
                pseudo_train: opt(&pseudo_train)?,
                train_waveforms: train_wav
                    .as_deref()
                    .map(|d| read_waves(d, cfg.fs).map(|r| r.into_iter().map(|r| r.waveform).collect()))
                    .transpose()?,
                natural_test: opt(&natural_test)?,
                synthetic_test: opt(&synthetic_test)?,
                enhanced_test: opt(&enhanced_test)?,
            };
            let outputs = run_scenario(sc, &assets, &mut ResynthesisVocoder, out)?;
            write_log(out, "scenario", &cfg, &format!("scenario {} rendered {}\n", sc.as_str(), outputs.len()))
        }
        Command::Mcd { a, b, common } => {
            let cfg = common.resolve(&[])?;
            let (a, b) = (load_feats(need(&a, "--a")?)?, load_feats(need(&b, "--b")?)?);
            let out = common.out_dir()?;
            if a.len() != b.len() {
                return Err(Error::Pairing(format!("{} vs {} utterances", a.len(), b.len())));
            }
            let mut tsv = String::from("utt_id\tmcd_db\n");
            let mut sum = 0.0;
            for (x, y) in a.iter().zip(&b) {
                if x.utt_id() != y.utt_id() {
                    return Err(Error::Pairing(format!("utterance ids differ: {} vs {}", x.utt_id(), y.utt_id())));
                }
                let d = mcd_utterance(x, y)?;
                sum += d;
                let _ = writeln!(tsv, "{}\t{d:.4}", x.utt_id());
            }
            let mean = sum / a.len() as f64;
            let _ = writeln!(tsv, "mean\t{mean:.4}");
            let path = out.join("mcd.tsv");
            fs::write(&path, tsv).map_err(io_err(&path))?;
            println!("{mean:.4}");
            write_log(out, "mcd", &cfg, &format!("mean {mean:.4}\n"))
        }
        Command::Plane { n, s, p, e, common } => {
            let cfg = common.resolve(&[])?;
            let sets = [
                (Label::N, load_feats(need(&n, "--n")?)?),
                (Label::S, load_feats(need(&s, "--s")?)?),
                (Label::P, load_feats(need(&p, "--p")?)?),
                (Label::E, load_feats(need(&e, "--e")?)?),
            ];
            let out = common.out_dir()?;
            let refs: Vec<(Label, &[UtteranceFeatures])> = sets.iter().map(|(l, v)| (*l, v.as_slice())).collect();
            let plane = mcd_plane(&refs)?;
            emit_plane(&plane, out.join("plane.svg"), out.join("plane.tsv"))?;
            write_log(out, "plane", &cfg, &format!("stress {:.3e}\n", plane.stress))
        }
        Command::Synth { feats, common } => {
            let cfg = common.resolve(&[])?;
            let feats = load_feats(need(&feats, "--feats")?)?;
            let out = common.out_dir()?;
            for f in &feats {
                wav::write_wav(out.join(format!("{}.wav", f.utt_id())), &synthesize(f, cfg.fs)?, cfg.fs)?;
            }
            write_log(out, "synth", &cfg, &format!("synthesized {}\n", feats.len()))
        }
        Command::Corpus { count, common } => {
            let cfg = common.resolve(&[])?;
            if count == 0 {
                return Err(Error::Input("--count must be at least 1".into()));
            }
            let out = common.out_dir()?;
            corpus::write_corpus(out, count, cfg.train.seed)?;
            write_log(out, "corpus", &cfg, &format!("generated {count}\n"))
        }
        Command::Run { corpus, dry_run, common } => {
            let cfg = common.resolve(&[])?;
            let dir = need(&corpus, "--corpus")?;
            let out = need(&common.out, "--out")?;
            if dry_run {
                let n = wav_files(dir)?.len();
                print!("{}", experiment::plan(&cfg, n, out));
                return Ok(());
            }
            let recs = read_waves(dir, cfg.fs)?;
            let report = experiment::run_experiment(&cfg, &recs, out, |line| eprintln!("{line}"))?;
            print!("{}", report.text);
            Ok(())
        }
    }
}

fn convert(
    name: &str,
    model: Option<PathBuf>,
    feats: Option<PathBuf>,
    common: Common,
    op: fn(&cyclevc::CycleVcModel, &UtteranceFeatures) -> Result<UtteranceFeatures>,
) -> Result<()> {
    let cfg = common.resolve(&[])?;
    let model = load_model(need(&model, "--model")?)?;
    let feats = load_feats(need(&feats, "--feats")?)?;
    let out = common.out_dir()?;
    let converted: Vec<UtteranceFeatures> = feats.iter().map(|f| op(&model, f)).collect::<Result<_>>()?;
    write_feature_dir(out, &converted)?;
    write_log(out, name, &cfg, &format!("converted {}\n", converted.len()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
