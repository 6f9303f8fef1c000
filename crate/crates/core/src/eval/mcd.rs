use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::{UtteranceFeatures, MCEP_DIM};
use crate::train::trim_pair;

/// `10 * sqrt(2) / ln(10)`: converts a cepstral Euclidean distance to dB.
pub const MCD_SCALE: f64 = 10.0 * std::f64::consts::SQRT_2 / std::f64::consts::LN_10;

/// Distortion between two mcep frames in dB, excluding the energy term.
pub fn mcd_frame(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != MCEP_DIM || b.len() != MCEP_DIM {
        return Err(Error::Shape(format!(
            "mcep frames must have {MCEP_DIM} dims, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sq: f64 = a[1..]
        .iter()
        .zip(&b[1..])
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(MCD_SCALE * sq.sqrt())
}

/// Frame-averaged MCD of one utterance pair (lengths reconciled by the
/// pairing trim rule).
pub fn mcd_utterance(a: &UtteranceFeatures, b: &UtteranceFeatures) -> Result<f64> {
    let (a, b) = trim_pair(a, b)?;
    let n = a.n_frames();
    let mut sum = 0.0;
    for t in 0..n {
        sum += mcd_frame(a.mcep_frame(t), b.mcep_frame(t))?;
    }
    Ok(sum / n as f64)
}

/// Mean over utterances of the per-utterance frame-mean MCD. Both sets must
/// contain the same utterance ids.
pub fn mcd_set(a: &[UtteranceFeatures], b: &[UtteranceFeatures]) -> Result<f64> {
    let index = |set: &[UtteranceFeatures]| -> Result<BTreeMap<String, usize>> {
        let mut map = BTreeMap::new();
        for (i, f) in set.iter().enumerate() {
            if map.insert(f.utt_id().to_string(), i).is_some() {
                return Err(Error::Pairing(format!("duplicate utterance id {}", f.utt_id())));
            }
        }
        Ok(map)
    };
    let (ia, ib) = (index(a)?, index(b)?);
    if ia.is_empty() {
        return Err(Error::Pairing("empty feature set".into()));
    }
    if ia.keys().ne(ib.keys()) {
        let missing: Vec<&String> = ia.keys().filter(|k| !ib.contains_key(*k)).collect();
        let extra: Vec<&String> = ib.keys().filter(|k| !ia.contains_key(*k)).collect();
        return Err(Error::Pairing(format!(
            "utterance ids differ: only in first {missing:?}, only in second {extra:?}"
        )));
    }
    let mut total = 0.0;
    for (id, &i) in &ia {
        total += mcd_utterance(&a[i], &b[ib[id]])?;
    }
    Ok(total / ia.len() as f64)
}
