//! Verification trial lists in the `{0|1} enroll test` convention.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialList {
    pub pairs: Vec<Trial>,
}

impl TrialList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks that every id names an utterance in `corpus`.
    pub fn resolve(&self, corpus: &Corpus) -> Result<()> {
        for t in &self.pairs {
            for id in [&t.enroll, &t.test] {
                if corpus.utterance(id).is_none() {
                    return Err(Error::Reference(id.clone()));
                }
            }
        }
        Ok(())
    }

    /// All utterance ids mentioned, sorted and deduplicated.
    pub fn utterance_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .pairs
            .iter()
            .flat_map(|t| [t.enroll.clone(), t.test.clone()])
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.pairs {
            let _ = writeln!(out, "{} {} {}", u8::from(t.is_target), t.enroll, t.test);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub fn parse_trials_str(text: &str, path: &Path) -> Result<TrialList> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 'label enroll test', got {} fields",
                fields.len()
            )));
        }
        let is_target = match fields[0] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("label '{other}' is not 0 or 1"))),
        };
        pairs.push(Trial {
            enroll: fields[1].to_string(),
            test: fields[2].to_string(),
            is_target,
        });
    }
    if pairs.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: "trial list is empty".into(),
        });
    }
    Ok(TrialList { pairs })
}

pub fn parse_trials(path: &Path) -> Result<TrialList> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trials_str(&text, path)
}

/// Builds a seeded trial list over `utterance_ids`: every same-speaker pair
/// becomes a target trial, and non-target pairs are sampled to fill the list
/// up to `total` trials.
pub fn make_trials(
    corpus: &Corpus,
    utterance_ids: &[String],
    total: usize,
    seed: u64,
) -> Result<TrialList> {
    let mut ids: Vec<&String> = utterance_ids.iter().collect();
    ids.sort();
    ids.dedup();
    let speaker = |id: &str| -> Result<&str> {
        corpus
            .utterance(id)
            .map(|u| u.speaker_id.as_str())
            .ok_or_else(|| Error::Reference(id.to_string()))
    };
    let mut targets = Vec::new();
    let mut nontargets = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let trial = Trial {
                enroll: (*a).clone(),
                test: (*b).clone(),
                is_target: speaker(a)? == speaker(b)?,
            };
            if trial.is_target {
                targets.push(trial);
            } else {
                nontargets.push(trial);
            }
        }
    }
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Config(
            "trial generation needs both same-speaker and cross-speaker pairs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    targets.truncate(total.saturating_sub(1).max(1));
    let n_non = total.saturating_sub(targets.len()).max(1);
    nontargets.shuffle(&mut rng);
    nontargets.truncate(n_non);
    nontargets.sort_by(|x, y| (&x.enroll, &x.test).cmp(&(&y.enroll, &y.test)));
    let mut pairs = targets;
    pairs.extend(nontargets);
    Ok(TrialList { pairs })
}
