//! Mel-cepstral distortion and the MCD-plane analysis.

mod mcd;
mod plane;

pub use mcd::{mcd_frame, mcd_set, mcd_utterance, MCD_SCALE};
pub use plane::{classical_mds, emit_plane, mcd_plane, plane_svg, plane_tsv, Label, MdsEmbedding, McdPlaneResult};
