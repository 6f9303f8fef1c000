//! Checkpoint files: a UTF-8 `key=value` header closed by an empty line,
//! followed by `theta` then `phi` as little-endian `f32` in layout
//! declaration order.

use std::fs;
use std::path::Path;

use super::{Arch, CycleVcModel, Layout, IN_DIM, OUT_DIM};
use crate::error::{Error, Result};
use crate::features::{Domain, NormStats, FRAME_DIM};

const FORMAT_NAME: &str = "cyclevc-checkpoint";
const FORMAT_VERSION: &str = "1";

fn join(values: &[f64]) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn encode_model(model: &CycleVcModel) -> Vec<u8> {
    let a = model.arch();
    let mut header = String::new();
    let mut kv = |k: &str, v: String| {
        header.push_str(k);
        header.push('=');
        header.push_str(&v);
        header.push('\n');
    };
    kv("format", FORMAT_NAME.into());
    kv("version", FORMAT_VERSION.into());
    kv("in_dim", IN_DIM.to_string());
    kv("out_dim", OUT_DIM.to_string());
    kv("in_conv_layers", a.in_conv_layers.to_string());
    kv("in_channels", a.in_channels.to_string());
    kv("kernel", a.kernel.to_string());
    kv("gru_hidden", a.gru_hidden.to_string());
    kv("out_conv_layers", a.out_conv_layers.to_string());
    kv("residual", u8::from(a.residual).to_string());
    kv("param_count", model.param_count().to_string());
    for (prefix, stats) in [("norm_src", &model.norm_src), ("norm_tgt", &model.norm_tgt)] {
        kv(&format!("{prefix}.mean"), join(&stats.mean));
        kv(&format!("{prefix}.std"), join(&stats.std));
    }
    header.push('\n');

    let mut out = header.into_bytes();
    for v in model.theta.iter().chain(&model.phi) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

struct Header<'a> {
    entries: Vec<(&'a str, &'a str)>,
}

impl<'a> Header<'a> {
    fn get(&self, key: &'static str) -> Result<&'a str> {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::format("header", format!("missing key {key}")))
    }

    fn usize(&self, key: &'static str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::format("header", format!("{key} is not an unsigned integer")))
    }

    fn floats(&self, key: &'static str) -> Result<Vec<f64>> {
        let v: Vec<f64> = self
            .get(key)?
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("header", format!("{key} holds a non-numeric value")))?;
        if v.len() != FRAME_DIM {
            return Err(Error::format(
                "header",
                format!("{key} has {} values, expected {FRAME_DIM}", v.len()),
            ));
        }
        Ok(v)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<CycleVcModel> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::format("header", "no blank line terminating the header"))?;
    let text = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::format("header", "header is not UTF-8"))?;
    let blob = &bytes[split + 2..];

    let mut entries = Vec::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("header", format!("line without '=': {line:?}")))?;
        if entries.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::format("header", format!("duplicate key {k}")));
        }
        entries.push((k, v));
    }
    let h = Header { entries };
    if h.get("format")? != FORMAT_NAME {
        return Err(Error::format("header", "not a cyclevc checkpoint"));
    }
    if h.get("version")? != FORMAT_VERSION {
        return Err(Error::format("header", "unsupported checkpoint version"));
    }
    if h.usize("in_dim")? != IN_DIM || h.usize("out_dim")? != OUT_DIM {
        return Err(Error::format("header", "in_dim/out_dim do not match 50/45"));
    }
    let residual = match h.get("residual")? {
        "0" => false,
        "1" => true,
        other => return Err(Error::format("header", format!("residual must be 0 or 1, got {other}"))),
    };
    let arch = Arch {
        in_conv_layers: h.usize("in_conv_layers")?,
        in_channels: h.usize("in_channels")?,
        kernel: h.usize("kernel")?,
        gru_hidden: h.usize("gru_hidden")?,
        out_conv_layers: h.usize("out_conv_layers")?,
        residual,
    };
    arch.validate()
        .map_err(|e| Error::format("header", e.to_string()))?;
    // Bound sizes before allocating anything derived from the header.
    let dims = [arch.in_conv_layers, arch.in_channels, arch.kernel, arch.gru_hidden, arch.out_conv_layers];
    if dims.iter().any(|&d| d > 1 << 16) {
        return Err(Error::format("header", "architecture dimension out of range"));
    }
    let declared = h.usize("param_count")?;
    let count = Layout::new(&arch).total();
    if declared != count {
        return Err(Error::format(
            "param_count",
            format!("header declares {declared} parameters, architecture implies {count}"),
        ));
    }
    let expected = 2 * count * 4;
    if blob.len() != expected {
        return Err(Error::format(
            "blob",
            format!("parameter blob size mismatch: expected {expected} bytes, found {}", blob.len()),
        ));
    }
    let stats = |prefix: &str, domain: Domain| -> Result<NormStats> {
        let (mk, sk) = match prefix {
            "src" => ("norm_src.mean", "norm_src.std"),
            _ => ("norm_tgt.mean", "norm_tgt.std"),
        };
        let s = NormStats {
            mean: h.floats(mk)?,
            std: h.floats(sk)?,
            domain,
        };
        s.validate().map_err(|e| Error::format("header", e.to_string()))?;
        Ok(s)
    };
    let norm_src = stats("src", Domain::Source)?;
    let norm_tgt = stats("tgt", Domain::Target)?;

    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("blob", "non-finite parameter"));
    }
    let (theta, phi) = values.split_at(count);
    CycleVcModel::from_parts(arch, theta.to_vec(), phi.to_vec(), norm_src, norm_tgt)
}

pub fn save_model(model: &CycleVcModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CycleVcModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::identity_stats;

    fn small() -> CycleVcModel {
        let (mut s, t) = identity_stats();
        s.mean[3] = 0.1;
        s.std[4] = 1.0 / 3.0;
        let arch = Arch {
            in_channels: 8,
            gru_hidden: 6,
            ..Arch::default()
        };
        CycleVcModel::init(arch, s, t, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        let probe = vec![0.3; 4 * FRAME_DIM];
        assert_eq!(back.stot_forward(&probe).unwrap(), m.stot_forward(&probe).unwrap());
    }

    #[test]
    fn truncated_blob_names_sizes() {
        let mut bytes = encode_model(&small());
        bytes.truncate(bytes.len() - 4);
        let err = decode_model(&bytes).unwrap_err().to_string();
        assert!(err.contains("expected") && err.contains("found"), "{err}");
    }

    #[test]
    fn arch_blob_mismatch() {
        let bytes = encode_model(&small());
        let split = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
        let header = std::str::from_utf8(&bytes[..split]).unwrap();
        let mut patched = header.replacen("gru_hidden=6", "gru_hidden=7", 1).into_bytes();
        patched.extend_from_slice(&bytes[split..]);
        let err = decode_model(&patched).unwrap_err();
        assert!(matches!(err, Error::Format { field: "param_count", .. }), "{err}");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_model(b"hello").is_err());
        assert!(decode_model(b"format=x\n\n").is_err());
    }
}
