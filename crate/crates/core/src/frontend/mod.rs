//! MFCC features and frame timing.

mod dump;
mod labels;
mod mfcc;

pub use dump::{read_feature_dump, sidecar_path, write_feature_dump, DumpSidecar};
pub use labels::{frame_phone_labels, frame_segments, FrameLabel, LayerGeometry};
pub use mfcc::{
    cmn, compute_mfcc, dct_matrix, frame_count, hamming, mel_filterbank, FeatureMatrix, MfccConfig,
    MfccExtractor,
};

use crate::corpus::Utterance;
use crate::error::Result;

/// MFCCs followed by per-utterance mean normalisation.
pub fn features(utt: &Utterance, config: &MfccConfig) -> Result<FeatureMatrix> {
    Ok(cmn(&compute_mfcc(utt, config)?))
}
