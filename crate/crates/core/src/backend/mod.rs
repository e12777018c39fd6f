//! Verification backends and metrics.
//!
//! Two scoring paths: plain cosine similarity of raw embeddings, and the
//! chain mean subtraction, LDA, length normalisation, two-covariance PLDA.

mod lda;
mod metrics;
mod plda;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::TrialList;
use crate::error::{Error, Result};

pub use lda::{fit_lda, scatter_matrices, WITHIN_RIDGE};
pub use metrics::{eer_from_scores, min_dcf_from_scores, operating_points, Eer, OperatingPoint};
pub use plda::{Plda, PldaScorer};

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of {}-d and {}-d vectors",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Ok(c.clamp(-1.0, 1.0))
}

/// Rescales `v` to norm `sqrt(dim)`.
pub fn length_norm(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(
            "length normalisation of a zero vector".into(),
        ));
    }
    let k = (v.len() as f64).sqrt() / norm;
    Ok(v.iter().map(|x| x * k).collect())
}

/// Default LDA output size: `min(dim, speakers - 1)` capped at `cap`.
pub fn default_lda_dim(dim: usize, n_speakers: usize, cap: usize) -> usize {
    dim.min(n_speakers.saturating_sub(1)).min(cap).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendModel {
    pub global_mean: DVector<f64>,
    /// `P x D`
    pub lda: DMatrix<f64>,
    pub plda: Plda,
    /// Observed-data log-likelihood before EM and after each iteration.
    pub ll_history: Vec<f64>,
}

impl BackendModel {
    pub fn input_dim(&self) -> usize {
        self.global_mean.len()
    }

    /// Mean subtraction, LDA projection and length normalisation.
    pub fn transform(&self, v: &[f64]) -> Result<DVector<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "backend expects {}-d embeddings, got {}",
                self.input_dim(),
                v.len()
            )));
        }
        let centred = DVector::from_column_slice(v) - &self.global_mean;
        let projected = &self.lda * centred;
        Ok(DVector::from_vec(length_norm(projected.as_slice())?))
    }

    pub fn scorer(&self) -> Result<BackendScorer<'_>> {
        Ok(BackendScorer {
            model: self,
            plda: self.plda.scorer()?,
        })
    }
}

/// A backend with its PLDA quadratic form precomputed.
pub struct BackendScorer<'a> {
    model: &'a BackendModel,
    plda: PldaScorer,
}

impl BackendScorer<'_> {
    pub fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        let a = self.model.transform(enroll)?;
        let b = self.model.transform(test)?;
        self.plda.score(&a, &b)
    }
}

/// Fits mean subtraction, LDA to `lda_dim`, length normalisation and PLDA
/// with `plda_iters` EM iterations. `labels` are speaker ids.
pub fn train_backend<S: AsRef<str>>(
    embeddings: &[Vec<f64>],
    labels: &[S],
    lda_dim: usize,
    plda_iters: usize,
) -> Result<BackendModel> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let d = embeddings.first().map_or(0, Vec::len);
    if d == 0 || embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::Shape(
            "embeddings must share one non-zero dimension".into(),
        ));
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    if counts.len() < 2 || counts.values().any(|c| *c < 2) {
        return Err(Error::Config(
            "backend training needs at least 2 speakers with at least 2 embeddings each".into(),
        ));
    }
    if embeddings.len() <= lda_dim {
        return Err(Error::Config(format!(
            "{} embeddings cannot support lda_dim {lda_dim}",
            embeddings.len()
        )));
    }
    for (i, k) in counts.keys().enumerate() {
        ids.insert(k, i);
    }
    let y: Vec<usize> = labels.iter().map(|l| ids[l.as_ref()]).collect();

    let x: Vec<DVector<f64>> = embeddings
        .iter()
        .map(|e| DVector::from_column_slice(e))
        .collect();
    let n = x.len() as f64;
    let global_mean = x.iter().fold(DVector::zeros(d), |a, v| a + v) / n;
    let centred: Vec<DVector<f64>> = x.iter().map(|v| v - &global_mean).collect();
    let lda = fit_lda(&centred, &y, lda_dim)?;
    let reduced = centred
        .iter()
        .map(|v| Ok(DVector::from_vec(length_norm((&lda * v).as_slice())?)))
        .collect::<Result<Vec<_>>>()?;
    let (plda, ll_history) = Plda::fit(&reduced, &y, plda_iters)?;
    log::info!(
        "backend: lda {d} -> {lda_dim}, within-covariance condition number {:.3e}",
        plda.within_condition()
    );
    Ok(BackendModel {
        global_mean,
        lda,
        plda,
        ll_history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub enroll: String,
    pub test: String,
    pub score: f64,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub trials: Vec<ScoredTrial>,
    /// "cosine" or "plda".
    pub backend: String,
    /// Embedding tap the scores came from.
    pub tap: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub eer: f64,
    pub dcf_p01: f64,
    pub dcf_p001: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl ScoreSet {
    /// Scores every trial with `score(enroll_id, test_id)`.
    pub fn build<F>(trials: &TrialList, backend: &str, tap: &str, mut score: F) -> Result<ScoreSet>
    where
        F: FnMut(&str, &str) -> Result<f64>,
    {
        let trials = trials
            .pairs
            .iter()
            .map(|t| {
                let s = score(&t.enroll, &t.test)?;
                if !s.is_finite() {
                    return Err(Error::Numeric(format!(
                        "score for {} {} is {s}",
                        t.enroll, t.test
                    )));
                }
                Ok(ScoredTrial {
                    enroll: t.enroll.clone(),
                    test: t.test.clone(),
                    score: s,
                    is_target: t.is_target,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreSet {
            trials,
            backend: backend.to_string(),
            tap: tap.to_string(),
        })
    }

    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut target = Vec::new();
        let mut nontarget = Vec::new();
        for t in &self.trials {
            if t.is_target {
                target.push(t.score);
            } else {
                nontarget.push(t.score);
            }
        }
        (target, nontarget)
    }

    /// `utt1 utt2 score label` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&format!(
                "{} {} {:.17e} {}\n",
                t.enroll, t.test, t.score, t.is_target as u8
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }
}

pub fn compute_eer(scores: &ScoreSet) -> Result<Eer> {
    let (t, n) = scores.split();
    eer_from_scores(&t, &n)
}

pub fn compute_min_dcf(scores: &ScoreSet, p_target: f64) -> Result<f64> {
    let (t, n) = scores.split();
    min_dcf_from_scores(&t, &n, p_target)
}

pub fn compute_metrics(scores: &ScoreSet) -> Result<Metrics> {
    let (t, n) = scores.split();
    Ok(Metrics {
        eer: eer_from_scores(&t, &n)?.eer,
        dcf_p01: min_dcf_from_scores(&t, &n, 0.01)?,
        dcf_p001: min_dcf_from_scores(&t, &n, 0.001)?,
        n_target: t.len(),
        n_nontarget: n.len(),
    })
}
