use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{feature_window, CheckpointMeta, SpeakerNet};
use crate::corpus::{add_noise, Corpus, NoiseKind, Utterance};
use crate::error::{Error, Result};
use crate::frontend::{features, FeatureMatrix, MfccConfig};
use crate::nn::{Sgd, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub kind: NoiseKind,
    pub snr_db: f64,
    /// Noisy copies added per clean utterance.
    pub copies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay: f64,
    pub decay_every: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs after which a checkpoint is kept. `None` uses
    /// [`default_checkpoint_epochs`]. Epoch 0 is always kept.
    pub checkpoint_epochs: Option<Vec<usize>>,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
    /// Rescales the batch gradient to at most this global L2 norm. Off by
    /// default; the update direction is unchanged either way.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            decay: 0.98,
            decay_every: 50_000,
            epochs: 10,
            batch_size: 32,
            checkpoint_epochs: None,
            seed: 0,
            augment: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// Settings for the desk-scale network and a few hundred utterances:
    /// single-example updates at a higher rate, since the full-size rate and
    /// batch leave the small net barely moved after ten epochs.
    pub fn desk() -> Self {
        TrainConfig {
            lr: 0.005,
            batch_size: 1,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::Config(
                "batch_size and decay_every must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn checkpoint_set(&self) -> BTreeSet<usize> {
        let mut set: BTreeSet<usize> = match &self.checkpoint_epochs {
            Some(v) => v.iter().copied().filter(|e| *e <= self.epochs).collect(),
            None => default_checkpoint_epochs(self.epochs).into_iter().collect(),
        };
        set.insert(0);
        set.insert(self.epochs);
        set
    }
}

/// 0, 1, 2, 5, 10, then every 10 epochs, plus the final epoch.
pub fn default_checkpoint_epochs(epochs: usize) -> Vec<usize> {
    let mut set: BTreeSet<usize> = [0, 1, 2, 5].into_iter().collect();
    set.extend((10..=epochs).step_by(10));
    set.insert(epochs);
    set.into_iter().filter(|e| *e <= epochs).collect()
}

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: FeatureMatrix,
    pub label: usize,
}

/// Features and integer labels for a training set.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<TrainExample>,
    /// Speaker id of each label.
    pub speakers: Vec<String>,
}

/// Computes features for every utterance in `corpus`, labelling speakers in
/// sorted order. With `augment`, noisy copies are appended after the clean
/// examples; babble is drawn from the same corpus.
pub fn build_training_set(
    corpus: &Corpus,
    mfcc: &MfccConfig,
    augment: Option<&AugmentConfig>,
    seed: u64,
) -> Result<TrainingSet> {
    let speakers = corpus.speakers();
    if speakers.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 speakers, corpus has {}",
            speakers.len()
        )));
    }
    let label_of = |utt: &Utterance| {
        speakers
            .binary_search(&utt.speaker_id)
            .expect("speaker list comes from the corpus")
    };
    let mut utts: Vec<Utterance> = corpus.utterances().to_vec();
    if let Some(aug) = augment {
        let pool: Vec<&Utterance> = corpus.utterances().iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        for copy in 0..aug.copies {
            for utt in corpus.utterances() {
                let mut noisy = add_noise(utt, aug.kind, aug.snr_db, &pool, &mut rng)?;
                if copy > 0 {
                    noisy.id = format!("{}{}", noisy.id, copy);
                }
                utts.push(noisy);
            }
        }
    }
    let examples = utts
        .par_iter()
        .map(|u| {
            Ok(TrainExample {
                features: features(u, mfcc)?,
                label: label_of(u),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet { examples, speakers })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub net: SpeakerNet,
    pub update_count: u64,
    pub lr: f64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path, speakers: &[String]) -> Result<()> {
        let meta = CheckpointMeta {
            config: self.net.config().clone(),
            epoch: self.epoch,
            speakers: speakers.to_vec(),
        };
        self.net.save(path, &meta, self.update_count, self.lr)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<TrainLogRow>,
    /// Mean per-example loss of each epoch, starting at epoch 1.
    pub epoch_loss: Vec<f64>,
    /// Fraction of crops classified correctly during each epoch.
    pub epoch_accuracy: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_net(&self) -> &SpeakerNet {
        &self.checkpoints.last().expect("epoch 0 is always kept").net
    }

    pub fn checkpoint(&self, epoch: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.epoch == epoch)
    }
}

/// One crop per example per epoch: a random window when the utterance is
/// long enough, otherwise the utterance wrapped to the crop length.
fn crop_start<R: Rng>(n_frames: usize, crop: usize, rng: &mut R) -> usize {
    if n_frames > crop {
        rng.random_range(0..=n_frames - crop)
    } else {
        0
    }
}

/// Minibatch SGD on softmax cross-entropy.
///
/// Examples within a batch run in parallel; their gradients are summed in
/// batch order, so results do not depend on the thread count.
pub fn train(
    mut net: SpeakerNet,
    examples: &[TrainExample],
    hyper: &TrainConfig,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let n_speakers = net.config().n_speakers;
    let labels: BTreeSet<usize> = examples.iter().map(|e| e.label).collect();
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 speakers, got {}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|l| **l >= n_speakers) {
        return Err(Error::Index {
            index: bad,
            len: n_speakers,
        });
    }
    let crop = net.config().crop_frames;
    let keep = hyper.checkpoint_set();
    let mut sgd = Sgd::new(hyper.lr, hyper.decay, hyper.decay_every);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let snapshot = |net: &SpeakerNet, epoch: usize, sgd: &Sgd| Checkpoint {
        epoch,
        net: net.clone(),
        update_count: sgd.updates,
        lr: sgd.lr(),
    };
    let mut outcome = TrainOutcome {
        checkpoints: vec![snapshot(&net, 0, &sgd)],
        log: Vec::new(),
        epoch_loss: Vec::new(),
        epoch_accuracy: Vec::new(),
    };

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let starts: Vec<usize> = order
            .iter()
            .map(|&i| crop_start(examples[i].features.n_frames, crop, &mut rng))
            .collect();
        let mut loss_sum = 0.0;
        let mut correct_sum = 0usize;
        for (batch, (idx, st)) in order
            .chunks(hyper.batch_size)
            .zip(starts.chunks(hyper.batch_size))
            .enumerate()
        {
            let lr = sgd.lr();
            let abort = |reason: String| Error::Training {
                epoch,
                batch,
                lr,
                reason,
            };
            let results: Vec<Result<(f64, bool, Vec<Tensor>)>> = idx
                .par_iter()
                .zip(st)
                .map(|(&i, &s)| {
                    let ex = &examples[i];
                    let x = feature_window(&ex.features, s, crop)?;
                    net.loss_and_gradients(x, ex.label)
                })
                .collect();
            let mut total: Option<Vec<Tensor>> = None;
            let mut loss = 0.0;
            let mut correct = 0usize;
            for r in results {
                let (l, ok, grads) = r.map_err(|e| match e {
                    Error::Numeric(m) => abort(m),
                    other => other,
                })?;
                loss += l;
                correct += ok as usize;
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.axpy(1.0, g)?;
                        }
                    }
                }
            }
            let n = idx.len() as f64;
            if !loss.is_finite() {
                return Err(abort(format!("loss is {loss}")));
            }
            let mut grads = total.expect("batches are non-empty");
            grads.iter_mut().for_each(|g| g.scale(1.0 / n));
            if let Some(max_norm) = hyper.clip_norm {
                let norm = grads.iter().map(|g| g.dot(g)).sum::<f64>().sqrt();
                if norm > max_norm {
                    grads.iter_mut().for_each(|g| g.scale(max_norm / norm));
                }
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            sgd.step(&mut net.params_mut(), &grad_refs)
                .map_err(|e| abort(e.to_string()))?;
            outcome.log.push(TrainLogRow {
                epoch,
                batch,
                loss: loss / n,
                lr,
                accuracy: correct as f64 / n,
            });
            loss_sum += loss;
            correct_sum += correct;
        }
        let n = examples.len().max(1) as f64;
        outcome.epoch_loss.push(loss_sum / n);
        outcome.epoch_accuracy.push(correct_sum as f64 / n);
        log::info!(
            "epoch {epoch}: loss {:.4}, accuracy {:.3}, lr {:e}",
            loss_sum / n,
            correct_sum as f64 / n,
            sgd.lr()
        );
        if keep.contains(&epoch) {
            outcome.checkpoints.push(snapshot(&net, epoch, &sgd));
        }
    }
    Ok(outcome)
}

/// Writes the per-batch log as `epoch,batch,loss,lr,accuracy`.
pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
