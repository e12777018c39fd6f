//! Multinomial logistic regression on frozen frame embeddings. Its error
//! rate is a frame error rate (probe FER), not a phone error rate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_disjoint, extract_frame_embeddings};
use crate::corpus::{fold_phone, Corpus};
use crate::error::{Error, Result};
use crate::frontend::MfccConfig;
use crate::model::{FrameEmbeddings, SpeakerNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the epoch-mean loss changes by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 0.1,
            batch_size: 32,
            max_epochs: 100,
            tol: 1e-5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "probe needs a positive lr, batch_size and max_epochs".into(),
            ));
        }
        Ok(())
    }
}

/// Frame vectors and their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl ProbeData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Frames labelled with the folded phone under their centre sample.
    /// Frames outside every segment are dropped.
    pub fn push_utterance(&mut self, fe: &FrameEmbeddings, corpus: &Corpus) -> Result<()> {
        let alignment = corpus
            .alignment(&fe.utterance_id)
            .ok_or_else(|| Error::Alignment {
                utterance: fe.utterance_id.clone(),
                reason: "no alignment available".into(),
            })?;
        for (c, v) in fe.center_samples.iter().zip(&fe.vectors) {
            if let Some(s) = alignment.segment_at(*c) {
                self.features.push(v.clone());
                self.labels
                    .push(fold_phone(&alignment.segments[s].phone).to_string());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub frame_error_rate: f64,
    /// Error of always guessing the most frequent training label.
    pub majority_error_rate: f64,
    pub epochs: usize,
    pub final_loss: f64,
    pub converged: bool,
    pub n_train: usize,
    pub n_eval: usize,
    pub n_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epoch: usize,
    pub layer: usize,
    #[serde(flatten)]
    pub result: ProbeResult,
}

struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for v in x {
            mean.iter_mut().zip(v).for_each(|(m, a)| *m += a / n);
        }
        let mut var = vec![0.0; d];
        for v in x {
            var.iter_mut()
                .zip(v.iter().zip(&mean))
                .for_each(|(s, (a, m))| *s += (a - m).powi(2) / n);
        }
        let inv_std = var.iter().map(|s| 1.0 / s.sqrt().max(1e-8)).collect();
        Standardizer { mean, inv_std }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((a, m), s)| (a - m) * s)
            .collect()
    }
}

/// Softmax probabilities of `w` (rows `[bias, weights...]`) at `x`.
fn softmax_row(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = w
        .iter()
        .map(|row| row[0] + row[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.iter().map(|e| e / z).collect()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Trains on `train` by minibatch SGD and reports the error rate on `eval`.
/// Inputs are standardised with training statistics. Eval frames whose label
/// never occurs in training count as errors.
pub fn linear_probe(
    train: &ProbeData,
    eval: &ProbeData,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    config.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::Analysis(
            "probe needs training and eval frames".into(),
        ));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &train.labels {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Analysis(format!(
            "probe needs at least 2 labels, training data has {}",
            counts.len()
        )));
    }
    let index: BTreeMap<&str, usize> = counts.keys().enumerate().map(|(i, l)| (*l, i)).collect();
    let k = index.len();
    let scaler = Standardizer::fit(&train.features);
    let x: Vec<Vec<f64>> = train.features.iter().map(|v| scaler.apply(v)).collect();
    let y: Vec<usize> = train.labels.iter().map(|l| index[l.as_str()]).collect();
    let d = x[0].len();

    let mut w = vec![vec![0.0; d + 1]; k];
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut prev = f64::INFINITY;
    let mut loss = f64::NAN;
    let mut epochs = 0;
    let mut converged = false;
    while epochs < config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![vec![0.0; d + 1]; k];
            for &i in batch {
                let p = softmax_row(&w, &x[i]);
                total -= p[y[i]].max(f64::MIN_POSITIVE).ln();
                for (c, g) in grad.iter_mut().enumerate() {
                    let e = p[c] - f64::from(u8::from(c == y[i]));
                    g[0] += e;
                    g[1..]
                        .iter_mut()
                        .zip(&x[i])
                        .for_each(|(g, xi)| *g += e * xi);
                }
            }
            let step = config.lr / batch.len() as f64;
            for (row, g) in w.iter_mut().zip(&grad) {
                row.iter_mut().zip(g).for_each(|(a, b)| *a -= step * b);
            }
        }
        epochs += 1;
        loss = total / x.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "probe loss is {loss} at epoch {epochs}"
            )));
        }
        if (prev - loss).abs() < config.tol {
            converged = true;
            break;
        }
        prev = loss;
    }

    let labels: Vec<&str> = index.keys().copied().collect();
    let errors = eval
        .features
        .iter()
        .zip(&eval.labels)
        .filter(|(v, l)| labels[argmax(&softmax_row(&w, &scaler.apply(v)))] != l.as_str())
        .count();
    let majority = counts
        .iter()
        .fold(
            ("", 0usize),
            |best, (l, c)| if *c > best.1 { (*l, *c) } else { best },
        )
        .0;
    let majority_errors = eval
        .labels
        .iter()
        .filter(|l| l.as_str() != majority)
        .count();
    Ok(ProbeResult {
        frame_error_rate: errors as f64 / eval.len() as f64,
        majority_error_rate: majority_errors as f64 / eval.len() as f64,
        epochs,
        final_loss: loss,
        converged,
        n_train: train.len(),
        n_eval: eval.len(),
        n_labels: k,
    })
}

fn layer_data(corpus: &Corpus, frames: &[Vec<FrameEmbeddings>], layer: usize) -> Result<ProbeData> {
    let mut data = ProbeData::default();
    for per_layer in frames {
        let fe = per_layer.get(layer - 1).ok_or_else(|| {
            Error::Config(format!("layer {layer} outside 1..={}", per_layer.len()))
        })?;
        data.push_utterance(fe, corpus)?;
    }
    Ok(data)
}

/// Probe FER for every checkpoint and layer, trained on `train_ids` frames
/// and evaluated on `eval_ids` frames.
pub fn linear_probe_phones(
    checkpoints: &[(usize, &SpeakerNet)],
    corpus: &Corpus,
    train_ids: &[String],
    eval_ids: &[String],
    layers: &[usize],
    mfcc: &MfccConfig,
    config: &ProbeConfig,
) -> Result<Vec<ProbeRow>> {
    check_disjoint(train_ids, eval_ids)?;
    let mut rows = Vec::new();
    for &(epoch, net) in checkpoints {
        let train = extract_frame_embeddings(net, corpus, train_ids, mfcc)?;
        let eval = extract_frame_embeddings(net, corpus, eval_ids, mfcc)?;
        let results = layers
            .par_iter()
            .map(|&layer| {
                let tr = layer_data(corpus, &train, layer)?;
                let ev = layer_data(corpus, &eval, layer)?;
                Ok(ProbeRow {
                    epoch,
                    layer,
                    result: linear_probe(&tr, &ev, config)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(results);
    }
    Ok(rows)
}
