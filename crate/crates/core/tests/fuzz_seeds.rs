//! Replays the checked-in fuzz corpus through the fuzz targets' invariants.

use std::fs;
use std::path::PathBuf;

use cyclevc::config::RunConfig;
use cyclevc::features::format::{decode_features, encode_features, format_manifest, parse_manifest};
use cyclevc::model::checkpoint::{decode_model, encode_model};
use cyclevc::wav::decode_wav;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds for {target}");
    paths.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn feature_seeds_decode_and_re_encode() {
    for bytes in seeds("decode_features") {
        let feat = decode_features("seed", &bytes).unwrap();
        assert_eq!(encode_features(&feat), bytes);
    }
}

#[test]
fn model_seeds_round_trip() {
    for bytes in seeds("decode_model") {
        let model = decode_model(&bytes).unwrap();
        assert_eq!(encode_model(&model), bytes);
    }
}

#[test]
fn manifest_seeds_parse() {
    for bytes in seeds("parse_manifest") {
        let entries = parse_manifest(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(parse_manifest(&format_manifest(&entries)).unwrap(), entries);
    }
}

#[test]
fn config_seeds_parse_and_echo() {
    for bytes in seeds("parse_config") {
        let cfg = RunConfig::parse(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
    }
}

#[test]
fn wav_seeds_decode() {
    for bytes in seeds("decode_wav") {
        let (samples, fs) = decode_wav(&bytes).unwrap();
        assert!(!samples.is_empty() && fs > 0);
    }
}
