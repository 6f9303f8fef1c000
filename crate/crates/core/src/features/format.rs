//! `CVF1` feature files and the pairing manifest.
//!
//! Feature file layout (little-endian):
//!
//! ```text
//! magic "CVF1" | u32 version=1 | u32 n_frames | u32 n_dims=50
//! | u32 frame_shift_us=5000 | u32 reserved=0 | n_frames*50 f32, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{UtteranceFeatures, FRAME_DIM, FRAME_SHIFT_US};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CVF1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const EXTENSION: &str = "cvf";

/// Serializes features into the `CVF1` byte layout.
pub fn encode_features(feat: &UtteranceFeatures) -> Vec<u8> {
    let frames = feat.to_frames();
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, feat.n_frames() as u32, FRAME_DIM as u32, FRAME_SHIFT_US, 0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in frames {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn header_u32(bytes: &[u8], index: usize) -> u32 {
    let at = 4 + 4 * index;
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses a `CVF1` byte buffer.
pub fn decode_features(utt_id: &str, bytes: &[u8]) -> Result<UtteranceFeatures> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "bad magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            "header",
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let version = header_u32(bytes, 0);
    if version != VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let n_frames = header_u32(bytes, 1) as usize;
    let n_dims = header_u32(bytes, 2) as usize;
    if n_dims != FRAME_DIM {
        return Err(Error::format(
            "n_dims",
            format!("dim mismatch: file has {n_dims}, expected {FRAME_DIM}"),
        ));
    }
    let shift = header_u32(bytes, 3);
    if shift != FRAME_SHIFT_US {
        return Err(Error::format(
            "frame_shift_us",
            format!("frame shift {shift} us, expected {FRAME_SHIFT_US}"),
        ));
    }
    let reserved = header_u32(bytes, 4);
    if reserved != 0 {
        return Err(Error::format("reserved", format!("reserved field is {reserved}")));
    }
    if n_frames == 0 {
        return Err(Error::format("n_frames", "zero frames"));
    }
    let body = &bytes[HEADER_LEN..];
    let expected = (n_frames as u64) * FRAME_DIM as u64 * 4;
    if (body.len() as u64) < expected {
        return Err(Error::format(
            "body",
            format!(
                "truncated body: header declares {n_frames} frames ({expected} bytes), found {} bytes",
                body.len()
            ),
        ));
    }
    if body.len() as u64 > expected {
        return Err(Error::format(
            "body",
            format!("{} trailing bytes after {n_frames} frames", body.len() as u64 - expected),
        ));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    UtteranceFeatures::from_frames(utt_id, &values).map_err(|e| Error::format("body", e.to_string()))
}

pub fn write_features(feat: &UtteranceFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_features(feat)).map_err(|e| Error::io(path, e))
}

/// Reads a feature file; the utterance id is the file stem.
pub fn read_features(path: impl AsRef<Path>) -> Result<UtteranceFeatures> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_features(&id, &bytes)
}

/// Writes every utterance as `<dir>/<utt_id>.cvf`.
pub fn write_feature_dir(dir: impl AsRef<Path>, feats: &[UtteranceFeatures]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in feats {
        write_features(f, dir.join(format!("{}.{EXTENSION}", f.utt_id())))?;
    }
    Ok(())
}

/// Reads all `*.cvf` files of a directory, sorted by utterance id.
pub fn read_feature_dir(dir: impl AsRef<Path>) -> Result<Vec<UtteranceFeatures>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
        .collect();
    paths.sort();
    paths.iter().map(read_features).collect()
}

/// One line of a pairing manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub natural: PathBuf,
    pub synthetic: PathBuf,
}

/// Parses `utt_id<TAB>natural_path<TAB>synthetic_path` lines. Blank lines
/// are skipped; relative paths are kept as written.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::format(
                "manifest",
                format!("line {}: expected 3 non-empty tab-separated fields", lineno + 1),
            ));
        }
        entries.push(ManifestEntry {
            utt_id: fields[0].to_string(),
            natural: PathBuf::from(fields[1]),
            synthetic: PathBuf::from(fields[2]),
        });
    }
    Ok(entries)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.utt_id, e.natural.display(), e.synthetic.display()))
        .collect()
}
