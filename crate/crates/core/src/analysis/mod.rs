//! Frame-level embedding analyses.
//!
//! Everything here works on [`FrameEmbeddings`] from an average-pooling net:
//! broad-class centroid classification, a linear phone probe, critical phone
//! statistics, frame-by-frame similarity matrices and a 2-d PCA projection.
//! Ties are always broken by the fixed [`BroadClass`] order (or the earliest
//! segment for phones) and counted.

mod broad;
mod critical;
mod pca;
mod probe;
mod similarity;

use std::collections::BTreeSet;

use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::frontend::{features, MfccConfig};
use crate::model::{FrameEmbeddings, SpeakerNet};

pub use broad::{
    classify_segment, compute_centroids, evaluate_broad_class, segment_embedding,
    utterance_segments, BroadClassCell, ClassCentroids, Classification, ConfusionMatrix,
    SegmentEmbedding,
};
pub use critical::{
    critical_phone_stats, critical_phone_stats_from_frames, enroll_speaker, CriticalPhoneReport,
    UtteranceCritical,
};
pub use pca::{pca_project_2d, Projection};
pub use probe::{linear_probe, linear_probe_phones, ProbeConfig, ProbeData, ProbeResult, ProbeRow};
pub use similarity::{cross_utterance_similarity, phone_ticks, SimilarityMatrix};

/// Cosine similarity, `None` when either vector is zero.
///
/// Computed as `a.b / sqrt(|a|^2 |b|^2)`, which makes `cosine(a, a)` exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean of equal-length vectors.
pub(crate) fn mean_vector<'a>(vs: impl IntoIterator<Item = &'a Vec<f64>>) -> Option<Vec<f64>> {
    let mut it = vs.into_iter();
    let mut sum = it.next()?.clone();
    let mut n = 1usize;
    for v in it {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Some(sum)
}

/// Frame-mode outputs of every layer for each utterance in `ids`, in order.
pub fn extract_frame_embeddings(
    net: &SpeakerNet,
    corpus: &Corpus,
    ids: &[String],
    mfcc: &MfccConfig,
) -> Result<Vec<Vec<FrameEmbeddings>>> {
    ids.par_iter()
        .map(|id| {
            let utt = corpus
                .utterance(id)
                .ok_or_else(|| Error::Reference(id.clone()))?;
            net.frame_mode_forward(&features(utt, mfcc)?)
        })
        .collect()
}

/// Refuses splits that share an utterance.
pub(crate) fn check_disjoint(train: &[String], eval: &[String]) -> Result<()> {
    let train: BTreeSet<&String> = train.iter().collect();
    let shared: Vec<&String> = eval.iter().filter(|id| train.contains(id)).collect();
    if !shared.is_empty() {
        return Err(Error::Analysis(format!(
            "train and eval splits overlap in {} utterances (first: {})",
            shared.len(),
            shared[0]
        )));
    }
    Ok(())
}

/// Central `level` interval of `Binomial(n, p)` expressed as proportions.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> Result<(f64, f64)> {
    if n == 0 || !(0.0..=1.0).contains(&p) || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "binomial interval needs n > 0, p in [0, 1], level in (0, 1); got {n}, {p}, {level}"
        )));
    }
    let dist = Binomial::new(p, n).map_err(|e| Error::Config(e.to_string()))?;
    let tail = (1.0 - level) / 2.0;
    let lo = dist.inverse_cdf(tail);
    let hi = dist.inverse_cdf(1.0 - tail);
    Ok((lo as f64 / n as f64, hi as f64 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_cosine_is_exactly_one() {
        let v = vec![0.1, -3.7, 2.2, 1e-3];
        assert_eq!(cosine(&v, &v), Some(1.0));
        assert_eq!(cosine(&v, &[0.0; 4]), None);
    }

    #[test]
    fn binomial_interval_brackets_p() {
        let (lo, hi) = binomial_interval(1000, 0.125, 0.99).unwrap();
        assert!(lo < 0.125 && hi > 0.125);
        assert!(lo > 0.09 && hi < 0.16);
    }
}
