//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod support;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use cyclevc::config::RunConfig;
use cyclevc::corpus::{generate_utterance, utterance_id};
use cyclevc::eval::{classical_mds, mcd_frame, mcd_utterance, MCD_SCALE};
use cyclevc::experiment::{run_experiment, ExperimentReport, Recording};
use cyclevc::features::format::{decode_features, encode_features, read_feature_dir};
use cyclevc::features::{analyze, synthesize, Domain, NormStats, CAP_DIM, FRAME_DIM, MCEP_DIM, SAMPLE_RATE};
use cyclevc::model::checkpoint::{decode_model, encode_model, load_model};
use cyclevc::model::{mcep_of, Arch, CycleVcModel};
use cyclevc::train::{train, PairedUtterance, TrainConfig};
use cyclevc::ttsim::{degrade, DegradeConfig};
use cyclevc::UtteranceFeatures;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixture() -> Vec<Recording> {
    (0..20)
        .map(|i| Recording {
            utt_id: utterance_id(i),
            waveform: generate_utterance(0, i),
        })
        .collect()
}

fn e2e(out: &Path) -> Result<ExperimentReport, String> {
    let cfg = RunConfig::default();
    run_experiment(&cfg, &fixture(), out, |_| {}).map_err(|e| e.to_string())
}

fn criterion_1(report: &ExperimentReport) -> Verdict {
    let cfg = RunConfig::default();
    ensure(report.train_ids.len() + report.test_ids.len() >= 20, "fixture smaller than 20")?;
    ensure(report.test_ids.len() * 5 == report.train_ids.len() + report.test_ids.len(), "split is not 80/20")?;
    ensure(cfg.train.epochs == 15 && cfg.train.rho == 1e-8, "defaults drifted")?;
    let summary: Vec<String> = report.checks[..2]
        .iter()
        .map(|c| format!("{} {:.3} vs {:.3} dB", c.name, c.lhs, c.rhs))
        .collect();
    ensure(
        report.checks[..2].iter().all(|c| c.passed && c.lhs + 0.1 < c.rhs),
        summary.join(", "),
    )?;
    Ok(summary.join(", "))
}

fn criterion_2(report: &ExperimentReport, out: &Path) -> Verdict {
    let natural = read_feature_dir(out.join("feats/natural")).map_err(|e| e.to_string())?;
    let pseudo = read_feature_dir(out.join("feats/pseudo_test")).map_err(|e| e.to_string())?;
    ensure(pseudo.len() == report.test_ids.len(), "missing pseudo features")?;
    for p in &pseudo {
        let n = natural
            .iter()
            .find(|n| n.utt_id() == p.utt_id())
            .ok_or(format!("no natural features for {}", p.utt_id()))?;
        ensure(p.n_frames() == n.n_frames(), format!("{}: frame count", p.utt_id()))?;
        ensure(p.uv() == n.uv(), format!("{}: uv", p.utt_id()))?;
        ensure(
            p.lf0().iter().zip(n.lf0()).all(|(a, b)| a.to_bits() == b.to_bits()),
            format!("{}: lf0", p.utt_id()),
        )?;
    }
    Ok(format!("{}/{} test utterances matched", pseudo.len(), report.test_ids.len()))
}

fn criterion_3() -> Verdict {
    let (coords, failed) = support::gradcheck::run_suite();
    ensure(failed.is_empty(), failed.join("; "))?;
    Ok(format!(
        "{} instances, {coords} theta/phi coordinates",
        support::gradcheck::INSTANCES
    ))
}

fn random_case(rng: &mut ChaCha8Rng) -> (CycleVcModel, Vec<f64>, Vec<f64>) {
    let arch = Arch {
        in_conv_layers: rng.gen_range(1..=2),
        in_channels: rng.gen_range(2..=6),
        kernel: rng.gen_range(1..=3),
        gru_hidden: rng.gen_range(2..=8),
        out_conv_layers: rng.gen_range(1..=2),
        residual: rng.gen_bool(0.5),
    };
    let stats = |rng: &mut ChaCha8Rng, domain| NormStats {
        mean: (0..FRAME_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        std: (0..FRAME_DIM).map(|_| rng.gen_range(0.5..2.0)).collect(),
        domain,
    };
    let (s, t) = (stats(rng, Domain::Source), stats(rng, Domain::Target));
    let model = CycleVcModel::init(arch, s, t, rng.gen()).unwrap();
    let n = rng.gen_range(1..=12);
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
    let x = v(n * FRAME_DIM);
    let y = v(n * FRAME_DIM);
    (model, x, y)
}

fn plain_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64
}

fn overfit() -> Result<(f64, f64), String> {
    let natural = analyze("o", &generate_utterance(0, 0), SAMPLE_RATE)
        .and_then(|f| f.truncated(120))
        .map_err(|e| e.to_string())?;
    let synthetic = degrade(&natural, &DegradeConfig::default()).map_err(|e| e.to_string())?;
    let (pair, _) = PairedUtterance::new("o", synthetic, natural).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 3e-3,
        arch: Arch {
            in_conv_layers: 1,
            in_channels: 32,
            kernel: 3,
            gru_hidden: 64,
            out_conv_layers: 1,
            residual: true,
        },
        ..TrainConfig::default()
    };
    let outcome = train(&[pair], &cfg).map_err(|e| e.to_string())?;
    // One pair means one update per epoch, and each epoch reports the loss
    // before its update: the first entry is the initial loss.
    let first = outcome.curve.first().unwrap().loss.stot_l1;
    let last = outcome.curve.last().unwrap().loss.stot_l1;
    Ok((first, last))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_zero: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let (model, x, y) = random_case(&mut rng);
        let rho = if rng.gen_bool(0.5) { 1e-8 } else { rng.gen_range(0.0..2.0) };
        let stot = plain_l1(&model.stot_forward(&x).unwrap(), &mcep_of(&y));
        let cycle = plain_l1(&model.cycle_path(&y).unwrap(), &mcep_of(&y));

        let zero = model.cycle_loss(&x, &y, 0.0).unwrap();
        ensure(zero.total == zero.stot_l1, "rho=0 total differs from stot_l1")?;
        worst_zero = worst_zero.max((zero.total - stot).abs() / stot.max(f64::MIN_POSITIVE));

        let loss = model.cycle_loss(&x, &y, rho).unwrap();
        worst_sum = worst_sum.max((loss.total - (stot + rho * cycle)).abs() / loss.total.max(f64::MIN_POSITIVE));
    }
    ensure(worst_zero <= 4.0 * f64::EPSILON, format!("rho=0 relative error {worst_zero:e}"))?;
    ensure(worst_sum <= 4.0 * f64::EPSILON, format!("total relative error {worst_sum:e}"))?;
    let (first, last) = overfit()?;
    ensure(last < 0.1 * first, format!("overfit stot_l1 {first:.4} -> {last:.4}"))?;
    Ok(format!(
        "rho=0 rel err {worst_zero:.1e}, sum rel err {worst_sum:.1e} over 1000 inputs, overfit {first:.4} -> {last:.4} in 200 steps"
    ))
}

fn frames(mcep: Vec<f32>) -> UtteranceFeatures {
    let n = mcep.len() / MCEP_DIM;
    UtteranceFeatures::new("m", mcep, vec![5.0; n], vec![true; n], vec![-20.0; n * CAP_DIM]).unwrap()
}

fn criterion_5() -> Verdict {
    let zero = vec![0.0f32; MCEP_DIM];
    let mut unit = zero.clone();
    unit[7] = 1.0;
    let mut energy = zero.clone();
    energy[0] = 3.0;
    let same = mcd_frame(&unit, &unit).map_err(|e| e.to_string())?;
    let one = mcd_frame(&zero, &unit).map_err(|e| e.to_string())?;
    let dim0 = mcd_frame(&zero, &energy).map_err(|e| e.to_string())?;
    ensure(same.abs() < 1e-4, format!("identity {same}"))?;
    ensure((one - 6.1419).abs() < 1e-4, format!("unit difference {one}"))?;
    ensure(dim0.abs() < 1e-4, format!("dim-0 difference {dim0}"))?;
    ensure((MCD_SCALE - 6.141851463713754).abs() < 1e-12, "scale constant")?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let n = rng.gen_range(1..10);
        let mut gen = || frames((0..n * MCEP_DIM).map(|_| rng.gen_range(-3.0f32..3.0)).collect());
        let (a, b, c) = (gen(), gen(), gen());
        let d = |p: &UtteranceFeatures, q: &UtteranceFeatures| mcd_utterance(p, q).unwrap();
        ensure(d(&a, &a) == 0.0, format!("triple {i}: identity"))?;
        ensure(d(&a, &b) >= 0.0, format!("triple {i}: negative"))?;
        ensure((d(&a, &b) - d(&b, &a)).abs() < 1e-12, format!("triple {i}: symmetry"))?;
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9, format!("triple {i}: triangle"))?;
    }
    Ok(format!("0 dB, {one:.4} dB, dim-0 {dim0:.4} dB; 1000 triples"))
}

fn euclid(pts: &[[f64; 2]]) -> Vec<Vec<f64>> {
    pts.iter()
        .map(|a| pts.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect())
        .collect()
}

fn criterion_6() -> Verdict {
    let configs: [&[[f64; 2]]; 4] = [
        &[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]],
        &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        &[[0.0, 0.0], [2.0, 0.5], [4.0, 1.0]],
        &[[-1.5, 2.0], [0.3, -0.7], [2.2, 1.1], [5.0, -3.0]],
    ];
    let mut worst_err: f64 = 0.0;
    let mut worst_stress: f64 = 0.0;
    for pts in configs {
        let d = euclid(pts);
        let emb = classical_mds(&d).map_err(|e| e.to_string())?;
        let back = euclid(&emb.coords);
        for (r0, r1) in d.iter().zip(&back) {
            for (a, b) in r0.iter().zip(r1) {
                worst_err = worst_err.max((a - b).abs());
            }
        }
        worst_stress = worst_stress.max(emb.stress);
    }
    ensure(worst_err < 1e-6, format!("distance error {worst_err:e}"))?;
    ensure(worst_stress < 1e-6, format!("stress {worst_stress:e}"))?;
    let bent = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
    let emb = classical_mds(&bent).map_err(|e| format!("non-Euclidean input failed: {e}"))?;
    ensure(emb.stress > 0.0, "non-Euclidean stress not reported")?;
    Ok(format!(
        "max distance error {worst_err:.1e}, max stress {worst_stress:.1e}, non-Euclidean stress {:.3}",
        emb.stress
    ))
}

fn criterion_7(a: &Path, b: &Path) -> Verdict {
    let files = ["model.ckpt", "report.txt", "plane.tsv", "plane.svg", "loss.tsv", "run.log"];
    for f in files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        ensure(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), format!("{f} differs between runs"))?;
    }
    let ckpt = fs::read(a.join("model.ckpt")).map_err(|e| e.to_string())?;
    let model = load_model(a.join("model.ckpt")).map_err(|e| e.to_string())?;
    ensure(encode_model(&model) == ckpt, "checkpoint re-encode differs")?;
    ensure(decode_model(&ckpt).map_err(|e| e.to_string())? == model, "checkpoint decode differs")?;
    let feats = read_feature_dir(a.join("feats/enhanced_test")).map_err(|e| e.to_string())?;
    for f in &feats {
        let bytes = encode_features(f);
        let disk = fs::read(a.join("feats/enhanced_test").join(format!("{}.cvf", f.utt_id()))).map_err(|e| e.to_string())?;
        ensure(bytes == disk, "feature re-encode differs")?;
        ensure(&decode_features(f.utt_id(), &bytes).map_err(|e| e.to_string())? == f, "feature decode differs")?;
    }
    Ok(format!("{} artifacts identical across two runs, round trips bit-exact", files.len()))
}

fn criterion_8() -> Verdict {
    let wave = generate_utterance(0, 1);
    let first = analyze("r", &wave, SAMPLE_RATE).map_err(|e| e.to_string())?;
    let resynth = synthesize(&first, SAMPLE_RATE).map_err(|e| e.to_string())?;
    let second = analyze("r", &resynth, SAMPLE_RATE).map_err(|e| e.to_string())?;
    ensure(first.n_frames() == second.n_frames(), "frame count changed")?;
    let mut sum = 0.0;
    let mut voiced = 0;
    for t in 0..first.n_frames() {
        if first.uv()[t] && second.uv()[t] {
            sum += mcd_frame(first.mcep_frame(t), second.mcep_frame(t)).map_err(|e| e.to_string())?;
            voiced += 1;
        }
    }
    ensure(voiced > 0, "no voiced frames")?;
    let mean = sum / voiced as f64;
    ensure(mean < 1.5, format!("voiced-frame MCD {mean:.3} dB"))?;
    Ok(format!("voiced-frame MCD {mean:.3} dB over {voiced} frames"))
}

fn main() -> ExitCode {
    // Bare numbers on the command line select criteria; none selects all.
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let want = |c: u32| picked.is_empty() || picked.contains(&c);
    let dir = tempfile::tempdir().expect("tempdir");
    let (run_a, run_b) = (dir.path().join("a"), dir.path().join("b"));

    let mut results: Vec<(&str, Verdict)> = Vec::new();
    if want(1) || want(2) || want(7) {
        let start = Instant::now();
        let first = e2e(&run_a);
        let secs = start.elapsed().as_secs_f64();
        let second = if want(7) { e2e(&run_b) } else { Err("not run".into()) };
        match &first {
            Ok(report) => {
                results.push(("1 end-to-end ordering", criterion_1(report).map(|s| format!("{s} ({secs:.0} s)"))));
                results.push(("2 temporal match", criterion_2(report, &run_a)));
            }
            Err(e) => {
                results.push(("1 end-to-end ordering", Err(e.clone())));
                results.push(("2 temporal match", Err(e.clone())));
            }
        }
        if want(7) {
            let c7 = match (&first, &second) {
                (Ok(_), Ok(_)) => criterion_7(&run_a, &run_b),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            };
            results.push(("7 determinism", c7));
        }
    }
    let rest: [(u32, &str, fn() -> Verdict); 5] = [
        (3, "3 gradient suite", criterion_3),
        (4, "4 loss contract", criterion_4),
        (5, "5 MCD oracles", criterion_5),
        (6, "6 MDS exactness", criterion_6),
        (8, "8 resynthesis", criterion_8),
    ];
    for (c, name, f) in rest {
        if want(c) {
            results.push((name, f()));
        }
    }
    results.sort_by_key(|(name, _)| *name);
    results.retain(|(name, _)| want(name[..1].parse().unwrap_or(0)));

    let mut ok = true;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                ok = false;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
