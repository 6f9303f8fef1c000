//! Runs the end-to-end experiment on the generated 20-utterance fixture.
//!
//! `cargo run --release --example fixture_run -- <out-dir> [key=value ...]`

use std::path::PathBuf;
use std::time::Instant;

use cyclevc::config::RunConfig;
use cyclevc::corpus::{generate_utterance, utterance_id};
use cyclevc::experiment::{run_experiment, Recording};

fn main() -> cyclevc::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fixture-run".into()));
    let overrides: Vec<String> = args.collect();
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&overrides)?;

    let corpus: Vec<Recording> = (0..20)
        .map(|i| Recording {
            utt_id: utterance_id(i),
            waveform: generate_utterance(0, i),
        })
        .collect();
    let start = Instant::now();
    let report = run_experiment(&cfg, &corpus, &out, |line| {
        eprintln!("{:>7.1}s {line}", start.elapsed().as_secs_f64())
    })?;
    print!("{}", report.text);
    Ok(())
}
