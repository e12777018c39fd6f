mod analysis;
mod pipeline;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use spkemb::corpus::{load_corpus_dir, Corpus, Split};
use spkemb::frontend::{features, MfccConfig};
use spkemb::model::{LoadedCheckpoint, SpeakerNet, SpeakerNetConfig, Tap};

use crate::config::{Command, Preset, RunConfig, Subset};
use crate::error::{CliError, Result};

pub const CHECKPOINT_EXT: &str = "ckpt";

pub fn run(rc: &RunConfig) -> Result<()> {
    let out = rc.out_dir.as_path();
    match &rc.command {
        Command::Synth(p) => pipeline::synth(p, rc.seed, out),
        Command::Mfcc(p) => pipeline::mfcc(p, out),
        Command::Train(p) => pipeline::train(p, rc.seed, out),
        Command::Extract(p) => pipeline::extract(p, out),
        Command::Score(p) => pipeline::score(p, out),
        Command::AblateRelu(p) => pipeline::ablate_relu(p, rc.seed, out),
        Command::AnalyzeBroad(p) => analysis::broad(p, out),
        Command::Probe(p) => analysis::probe(p, rc.seed, out),
        Command::CriticalPhones(p) => analysis::critical(p, out),
        Command::Simmatrix(p) => analysis::simmatrix(p, out),
        Command::Project(p) => analysis::project(p, out),
        Command::Report(p) => report::report(p, out),
    }
}

fn required<'a>(path: &'a Path, name: &'static str) -> Result<&'a Path> {
    if path.as_os_str().is_empty() {
        Err(CliError::Missing(name))
    } else {
        Ok(path)
    }
}

fn corpus(path: &Path) -> Result<Corpus> {
    Ok(load_corpus_dir(required(path, "corpus")?)?)
}

fn split(path: &Path) -> Result<Split> {
    Ok(Split::read(required(path, "split")?)?)
}

fn checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    Ok(SpeakerNet::load(required(path, "checkpoint")?)?)
}

fn all_ids(corpus: &Corpus) -> Vec<String> {
    corpus.utterances().iter().map(|u| u.id.clone()).collect()
}

/// Utterance ids for an analysis subset.
fn subset_ids(
    corpus: &Corpus,
    split_path: Option<&PathBuf>,
    subset: Subset,
) -> Result<Vec<String>> {
    if subset == Subset::All {
        return Ok(all_ids(corpus));
    }
    let split = split(split_path.ok_or(CliError::Missing("split"))?)?;
    Ok(match subset {
        Subset::Train => split.train,
        _ => split.eval,
    })
}

fn net_config(preset: Preset, n_speakers: usize) -> SpeakerNetConfig {
    match preset {
        Preset::Desk => SpeakerNetConfig::desk(n_speakers),
        Preset::Paper => SpeakerNetConfig::paper(n_speakers),
    }
}

/// Utterance-level embeddings for `ids`.
fn embeddings(
    net: &SpeakerNet,
    corpus: &Corpus,
    ids: &[String],
    tap: Tap,
    mfcc: &MfccConfig,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let rows = ids
        .par_iter()
        .map(|id| {
            let utt = corpus
                .utterance(id)
                .ok_or_else(|| spkemb::Error::Reference(id.clone()))?;
            Ok((
                id.clone(),
                net.extract_embedding(&features(utt, mfcc)?, tap)?,
            ))
        })
        .collect::<spkemb::Result<Vec<_>>>()?;
    Ok(rows.into_iter().collect())
}

/// Checkpoint files, expanding directories to their `.ckpt` files, loaded
/// and ordered by epoch.
fn checkpoints(paths: &[PathBuf]) -> Result<Vec<LoadedCheckpoint>> {
    if paths.is_empty() {
        return Err(CliError::Missing("checkpoints"));
    }
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|f| f.extension().is_some_and(|x| x == CHECKPOINT_EXT))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    let mut loaded = files
        .iter()
        .map(|f| checkpoint(f))
        .collect::<Result<Vec<_>>>()?;
    loaded.sort_by_key(|c| c.meta.epoch);
    if let Some(w) = loaded
        .windows(2)
        .find(|w| w[0].meta.epoch == w[1].meta.epoch)
    {
        return Err(CliError::Invalid(format!(
            "two checkpoints for epoch {}",
            w[0].meta.epoch
        )));
    }
    if loaded.is_empty() {
        return Err(CliError::Invalid("no checkpoint files found".into()));
    }
    Ok(loaded)
}

fn check_layers(layers: &[usize]) -> Result<()> {
    if layers.is_empty() || layers.iter().any(|l| !(1..=6).contains(l)) {
        return Err(CliError::Invalid(format!(
            "layers must be in 1..=6, got {layers:?}"
        )));
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}
