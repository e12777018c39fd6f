use serde::{Deserialize, Serialize};

use super::{binomial_interval, check_disjoint, cosine, extract_frame_embeddings, mean_vector};
use crate::corpus::{BroadClass, Corpus, PhoneAlignment, PhoneSegment};
use crate::error::{Error, Result};
use crate::frontend::MfccConfig;
use crate::model::{FrameEmbeddings, SpeakerNet};

/// Mean frame embedding of one phone segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEmbedding {
    pub utterance_id: String,
    pub segment: usize,
    pub phone: String,
    pub class: BroadClass,
    pub vector: Vec<f64>,
}

/// Mean of the frames whose receptive-field centre lies inside `seg`.
pub fn segment_embedding(fe: &FrameEmbeddings, seg: &PhoneSegment) -> Result<Vec<f64>> {
    let covered = fe
        .center_samples
        .iter()
        .zip(&fe.vectors)
        .filter(|(c, _)| seg.contains(**c))
        .map(|(_, v)| v);
    mean_vector(covered).ok_or_else(|| Error::EmptySegment {
        utterance: fe.utterance_id.clone(),
        start: seg.start_sample,
        end: seg.end_sample,
        rate_ms: fe.rate_ms,
    })
}

/// Embeddings of every segment that covers at least one frame, plus the
/// number of segments skipped for covering none.
pub fn utterance_segments(
    fe: &FrameEmbeddings,
    alignment: &PhoneAlignment,
) -> Result<(Vec<SegmentEmbedding>, usize)> {
    let mut out = Vec::with_capacity(alignment.segments.len());
    let mut skipped = 0;
    for (i, seg) in alignment.segments.iter().enumerate() {
        match segment_embedding(fe, seg) {
            Ok(vector) => out.push(SegmentEmbedding {
                utterance_id: fe.utterance_id.clone(),
                segment: i,
                phone: seg.phone.clone(),
                class: seg.broad_class,
                vector,
            }),
            Err(Error::EmptySegment { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroids {
    pub layer: usize,
    pub epoch: usize,
    /// Indexed by [`BroadClass::index`]; `None` for classes without segments.
    pub vectors: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
}

impl ClassCentroids {
    pub fn present(&self) -> Vec<BroadClass> {
        BroadClass::ALL
            .into_iter()
            .filter(|c| self.vectors[c.index()].is_some())
            .collect()
    }

    pub fn centroid(&self, class: BroadClass) -> Option<&[f64]> {
        self.vectors[class.index()].as_deref()
    }
}

pub fn compute_centroids(
    segments: &[SegmentEmbedding],
    layer: usize,
    epoch: usize,
) -> Result<ClassCentroids> {
    let mut vectors = Vec::with_capacity(BroadClass::COUNT);
    let mut counts = Vec::with_capacity(BroadClass::COUNT);
    for class in BroadClass::ALL {
        let members: Vec<&Vec<f64>> = segments
            .iter()
            .filter(|s| s.class == class)
            .map(|s| &s.vector)
            .collect();
        counts.push(members.len());
        vectors.push(mean_vector(members));
    }
    let centroids = ClassCentroids {
        layer,
        epoch,
        vectors,
        counts,
    };
    if centroids.present().len() < 2 {
        return Err(Error::Analysis(format!(
            "centroids need at least 2 classes, found {}",
            centroids.present().len()
        )));
    }
    Ok(centroids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub predicted: BroadClass,
    /// Cosine to each centroid, `None` for absent classes.
    pub scores: Vec<Option<f64>>,
    /// More than one class reached the best score.
    pub tied: bool,
}

/// Nearest centroid by cosine. Ties go to the earliest class.
pub fn classify_segment(centroids: &ClassCentroids, u: &[f64]) -> Result<Classification> {
    if u.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("cannot classify a zero embedding".into()));
    }
    let scores: Vec<Option<f64>> = centroids
        .vectors
        .iter()
        .map(|c| c.as_ref().map(|c| cosine(c, u).unwrap_or(0.0)))
        .collect();
    let best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] == Some(best))
        .collect();
    Ok(Classification {
        predicted: BroadClass::ALL[winners[0]],
        scores,
        tied: winners.len() > 1,
    })
}

/// Rows are the true class, columns the prediction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; BroadClass::COUNT]; BroadClass::COUNT],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: BroadClass, predicted: BroadClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..BroadClass::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; BroadClass::COUNT] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }
}

/// Result for one (epoch, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadClassCell {
    pub epoch: usize,
    pub layer: usize,
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub n_classes: usize,
    pub chance: f64,
    /// 99% binomial interval of accuracy under chance guessing.
    pub chance_lo: f64,
    pub chance_hi: f64,
    pub ties: usize,
    pub skipped_train: usize,
    pub skipped_eval: usize,
    pub centroids: ClassCentroids,
    pub confusion: ConfusionMatrix,
}

fn alignment<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a PhoneAlignment> {
    corpus.alignment(id).ok_or_else(|| Error::Alignment {
        utterance: id.to_string(),
        reason: "no alignment available".into(),
    })
}

fn layer_segments(
    corpus: &Corpus,
    frames: &[Vec<FrameEmbeddings>],
    layer: usize,
) -> Result<(Vec<SegmentEmbedding>, usize)> {
    let mut all = Vec::new();
    let mut skipped = 0;
    for per_layer in frames {
        let fe = per_layer.get(layer - 1).ok_or_else(|| {
            Error::Config(format!("layer {layer} outside 1..={}", per_layer.len()))
        })?;
        let (segs, s) = utterance_segments(fe, alignment(corpus, &fe.utterance_id)?)?;
        all.extend(segs);
        skipped += s;
    }
    Ok((all, skipped))
}

/// Centroids from `train_ids`, accuracy on `eval_ids`, for every
/// checkpoint and layer. Checkpoints are `(epoch, net)` pairs.
pub fn evaluate_broad_class(
    checkpoints: &[(usize, &SpeakerNet)],
    corpus: &Corpus,
    train_ids: &[String],
    eval_ids: &[String],
    layers: &[usize],
    mfcc: &MfccConfig,
) -> Result<Vec<BroadClassCell>> {
    check_disjoint(train_ids, eval_ids)?;
    let mut cells = Vec::with_capacity(checkpoints.len() * layers.len());
    for &(epoch, net) in checkpoints {
        let train = extract_frame_embeddings(net, corpus, train_ids, mfcc)?;
        let eval = extract_frame_embeddings(net, corpus, eval_ids, mfcc)?;
        for &layer in layers {
            let (train_segs, skipped_train) = layer_segments(corpus, &train, layer)?;
            let (eval_segs, skipped_eval) = layer_segments(corpus, &eval, layer)?;
            let centroids = compute_centroids(&train_segs, layer, epoch)?;
            let mut confusion = ConfusionMatrix::default();
            let mut correct = 0u64;
            let mut ties = 0;
            for seg in &eval_segs {
                let c = classify_segment(&centroids, &seg.vector)?;
                confusion.add(seg.class, c.predicted);
                correct += u64::from(c.predicted == seg.class);
                ties += usize::from(c.tied);
            }
            if correct != confusion.correct() {
                return Err(Error::Analysis(format!(
                    "accuracy recount mismatch: {correct} vs {}",
                    confusion.correct()
                )));
            }
            if eval_segs.is_empty() {
                return Err(Error::Analysis("eval split has no usable segments".into()));
            }
            let n_classes = centroids.present().len();
            let chance = 1.0 / n_classes as f64;
            let (chance_lo, chance_hi) = binomial_interval(confusion.total(), chance, 0.99)?;
            cells.push(BroadClassCell {
                epoch,
                layer,
                accuracy: confusion.accuracy(),
                correct,
                total: confusion.total(),
                n_classes,
                chance,
                chance_lo,
                chance_hi,
                ties,
                skipped_train,
                skipped_eval,
                centroids,
                confusion,
            });
        }
    }
    Ok(cells)
}
