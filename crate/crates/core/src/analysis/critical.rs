//! Which phones carry the speaker: per-frame cosine between an utterance's
//! top-layer frames and its speaker's leave-one-out enrollment vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cosine, extract_frame_embeddings, mean_vector};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::frontend::MfccConfig;
use crate::model::{FrameEmbeddings, SpeakerNet};

/// Speaker vector as the mean of utterance-level embeddings.
pub fn enroll_speaker(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    if embeddings.iter().any(|e| e.len() != embeddings[0].len()) {
        return Err(Error::Shape(
            "enrollment embeddings differ in dimension".into(),
        ));
    }
    mean_vector(embeddings)
        .ok_or_else(|| Error::Analysis("cannot enroll from zero embeddings".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceCritical {
    pub utterance_id: String,
    pub speaker_id: String,
    pub best_phone: String,
    pub best_cosine: f64,
    pub worst_phone: String,
    pub worst_cosine: f64,
    /// Another phone matched the best mean cosine exactly.
    pub tied: bool,
    /// Cosine of every top-layer frame to the enrolled speaker.
    pub frame_cosines: Vec<f64>,
    /// `(phone, mean cosine)` in order of first appearance.
    pub phone_means: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticalPhoneReport {
    pub utterances: Vec<UtteranceCritical>,
    /// Phone -> number of utterances where it had the highest mean cosine.
    pub best_histogram: BTreeMap<String, usize>,
    pub worst_histogram: BTreeMap<String, usize>,
    /// Phone -> number of segments over the scored utterances.
    pub frequency: BTreeMap<String, usize>,
    /// Utterances without an alignment or without any phone frame.
    pub skipped: usize,
    pub ties: usize,
    pub zero_frames: usize,
}

impl CriticalPhoneReport {
    /// 1-based rank of each phone in the occurrence histogram, most frequent
    /// first, equal counts ordered by phone symbol.
    pub fn frequency_rank(&self) -> BTreeMap<String, usize> {
        let mut phones: Vec<(&String, &usize)> = self.frequency.iter().collect();
        phones.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        phones
            .into_iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), i + 1))
            .collect()
    }

    /// `(phone, count, rank_in_frequency_histogram)` for every phone that won
    /// at least one utterance, highest count first.
    pub fn histogram_rows(&self) -> Vec<(String, usize, usize)> {
        let rank = self.frequency_rank();
        let mut rows: Vec<(String, usize, usize)> = self
            .best_histogram
            .iter()
            .map(|(p, c)| (p.clone(), *c, rank.get(p).copied().unwrap_or(0)))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        rows
    }

    /// The phone with the largest histogram count, if any.
    pub fn dominant_phone(&self) -> Option<String> {
        self.histogram_rows().into_iter().next().map(|r| r.0)
    }
}

/// Leave-one-out critical phone statistics over `ids`. Every speaker in `ids`
/// needs at least two utterances there. Needs an average-pooling net.
pub fn critical_phone_stats(
    net: &SpeakerNet,
    corpus: &Corpus,
    ids: &[String],
    mfcc: &MfccConfig,
) -> Result<CriticalPhoneReport> {
    let top: Vec<FrameEmbeddings> = extract_frame_embeddings(net, corpus, ids, mfcc)?
        .into_iter()
        .map(|mut layers| layers.pop().expect("frame mode yields every layer"))
        .collect();
    critical_phone_stats_from_frames(&top, corpus)
}

/// The same statistics from precomputed top-layer frames, one entry per
/// utterance. Utterance embeddings are the frame means.
pub fn critical_phone_stats_from_frames(
    top: &[FrameEmbeddings],
    corpus: &Corpus,
) -> Result<CriticalPhoneReport> {
    let ids: Vec<&String> = top.iter().map(|fe| &fe.utterance_id).collect();
    let utterance_embeddings: Vec<Vec<f64>> = top.iter().map(|fe| fe.mean()).collect();
    let mut speaker_of = Vec::with_capacity(ids.len());
    let mut by_speaker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let spk = corpus
            .utterance(id)
            .ok_or_else(|| Error::Reference(id.to_string()))?
            .speaker_id
            .clone();
        by_speaker.entry(spk.clone()).or_default().push(i);
        speaker_of.push(spk);
    }
    if let Some((spk, _)) = by_speaker.iter().find(|(_, u)| u.len() < 2) {
        return Err(Error::Analysis(format!(
            "speaker {spk} has fewer than 2 utterances; leave-one-out enrollment is impossible"
        )));
    }

    let mut report = CriticalPhoneReport::default();
    for (i, fe) in top.iter().enumerate() {
        let Some(alignment) = corpus.alignment(&fe.utterance_id) else {
            report.skipped += 1;
            continue;
        };
        let others: Vec<Vec<f64>> = by_speaker[&speaker_of[i]]
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| utterance_embeddings[j].clone())
            .collect();
        if others.len() + 1 != by_speaker[&speaker_of[i]].len() {
            return Err(Error::Analysis(format!(
                "enrollment for {} would include the scored utterance",
                fe.utterance_id
            )));
        }
        let enrolled = enroll_speaker(&others)?;

        let mut frame_cosines = Vec::with_capacity(fe.len());
        let mut sums: Vec<(String, f64, usize)> = Vec::new();
        for (c, v) in fe.center_samples.iter().zip(&fe.vectors) {
            let cos = cosine(v, &enrolled).unwrap_or_else(|| {
                report.zero_frames += 1;
                0.0
            });
            frame_cosines.push(cos);
            if let Some(s) = alignment.segment_at(*c) {
                let phone = &alignment.segments[s].phone;
                match sums.iter_mut().find(|(p, _, _)| p == phone) {
                    Some(e) => {
                        e.1 += cos;
                        e.2 += 1;
                    }
                    None => sums.push((phone.clone(), cos, 1)),
                }
            }
        }
        if sums.is_empty() {
            report.skipped += 1;
            continue;
        }
        // phones enter `sums` in order of their first frame, so strict
        // comparisons leave ties with the earliest segment
        let means: Vec<(String, f64)> = sums
            .into_iter()
            .map(|(p, s, n)| (p, s / n as f64))
            .collect();
        let mut best = 0;
        let mut worst = 0;
        for (k, (_, m)) in means.iter().enumerate() {
            if *m > means[best].1 {
                best = k;
            }
            if *m < means[worst].1 {
                worst = k;
            }
        }
        let tied = means.iter().filter(|(_, m)| *m == means[best].1).count() > 1;
        report.ties += usize::from(tied);
        for seg in &alignment.segments {
            *report.frequency.entry(seg.phone.clone()).or_default() += 1;
        }
        *report
            .best_histogram
            .entry(means[best].0.clone())
            .or_default() += 1;
        *report
            .worst_histogram
            .entry(means[worst].0.clone())
            .or_default() += 1;
        report.utterances.push(UtteranceCritical {
            utterance_id: fe.utterance_id.clone(),
            speaker_id: speaker_of[i].clone(),
            best_phone: means[best].0.clone(),
            best_cosine: means[best].1,
            worst_phone: means[worst].0.clone(),
            worst_cosine: means[worst].1,
            tied,
            frame_cosines,
            phone_means: means,
        });
    }
    Ok(report)
}
