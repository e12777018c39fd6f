//! Command-line flags. Every flag is optional and overrides the matching
//! field of the run config, which itself starts from defaults or `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use spkemb::model::{Pooling, Tap};

use crate::config::{Backend, Command, Preset, Subset};

#[derive(Debug, Parser)]
#[command(
    name = "spkemb",
    version,
    about = "Speaker embedding training and frame-level analysis"
)]
pub struct Cli {
    /// Run config to start from; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Sub,
}

/// Parses a lowercase enum name the same way the config file does.
fn named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn preset(s: &str) -> Result<Preset, String> {
    named(s)
}
fn pooling(s: &str) -> Result<Pooling, String> {
    named(s)
}
fn tap(s: &str) -> Result<Tap, String> {
    named(s)
}
fn backend(s: &str) -> Result<Backend, String> {
    named(s)
}
fn subset(s: &str) -> Result<Subset, String> {
    named(s)
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Generate a synthetic corpus with a held-out split and trial list.
    Synth(SynthArgs),
    /// Dump MFCC features for every utterance.
    Mfcc(CorpusArgs),
    /// Train a speaker network and keep checkpoints.
    Train(TrainArgs),
    /// Write utterance embeddings from a checkpoint.
    Extract(ExtractArgs),
    /// Score a trial list with the cosine or PLDA backend.
    Score(ScoreArgs),
    /// Four-cell embedding tap by pre-fc2 ReLU experiment.
    AblateRelu(AblateArgs),
    /// Broad phonetic class centroid classification per checkpoint and layer.
    AnalyzeBroad(BroadArgs),
    /// Linear phone probe per checkpoint and layer.
    Probe(ProbeArgs),
    /// Phones whose frames lie closest to the enrolled speaker.
    CriticalPhones(CriticalArgs),
    /// Frame-by-frame cosine similarity between two utterances.
    Simmatrix(SimArgs),
    /// 2-d PCA projection of phone segment embeddings.
    Project(ProjectArgs),
    /// Collate every CSV under the given directories.
    Report(ReportArgs),
}

impl Sub {
    pub fn name(&self) -> &'static str {
        match self {
            Sub::Synth(_) => "synth",
            Sub::Mfcc(_) => "mfcc",
            Sub::Train(_) => "train",
            Sub::Extract(_) => "extract",
            Sub::Score(_) => "score",
            Sub::AblateRelu(_) => "ablate-relu",
            Sub::AnalyzeBroad(_) => "analyze-broad",
            Sub::Probe(_) => "probe",
            Sub::CriticalPhones(_) => "critical-phones",
            Sub::Simmatrix(_) => "simmatrix",
            Sub::Project(_) => "project",
            Sub::Report(_) => "report",
        }
    }

    /// Default params for this subcommand.
    pub fn default_command(&self) -> Command {
        match self {
            Sub::Synth(_) => Command::Synth(Default::default()),
            Sub::Mfcc(_) => Command::Mfcc(Default::default()),
            Sub::Train(_) => Command::Train(Default::default()),
            Sub::Extract(_) => Command::Extract(Default::default()),
            Sub::Score(_) => Command::Score(Default::default()),
            Sub::AblateRelu(_) => Command::AblateRelu(Default::default()),
            Sub::AnalyzeBroad(_) => Command::AnalyzeBroad(Default::default()),
            Sub::Probe(_) => Command::Probe(Default::default()),
            Sub::CriticalPhones(_) => Command::CriticalPhones(Default::default()),
            Sub::Simmatrix(_) => Command::Simmatrix(Default::default()),
            Sub::Project(_) => Command::Project(Default::default()),
            Sub::Report(_) => Command::Report(Default::default()),
        }
    }

    /// Writes the given flags into `command`, which must be the same variant.
    pub fn apply(self, command: &mut Command) {
        fn set<T>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        match (self, command) {
            (Sub::Synth(a), Command::Synth(p)) => {
                set(&mut p.speakers, a.speakers);
                set(&mut p.utts_per_speaker, a.utts_per_speaker);
                set(&mut p.phones_per_utt, a.phones_per_utt);
                set(&mut p.sample_rate, a.sample_rate);
                if a.critical_phone.is_some() {
                    p.critical_phone = a.critical_phone;
                }
                set(&mut p.held_out, a.held_out);
                set(&mut p.trials, a.trials);
            }
            (Sub::Mfcc(a), Command::Mfcc(p)) => set(&mut p.corpus, a.corpus),
            (Sub::Train(a), Command::Train(p)) => {
                set(&mut p.corpus, a.corpus);
                if a.split.is_some() {
                    p.split = a.split;
                }
                set(&mut p.net.preset, a.net.preset);
                set(&mut p.net.pooling, a.net.pooling);
                set(&mut p.net.relu_before_fc2, a.relu_before_fc2);
                a.hyper.apply(&mut p.hyper);
            }
            (Sub::Extract(a), Command::Extract(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.checkpoint, a.checkpoint);
                set(&mut p.tap, a.tap);
            }
            (Sub::Score(a), Command::Score(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.checkpoint, a.checkpoint);
                set(&mut p.trials, a.trials);
                if a.split.is_some() {
                    p.split = a.split;
                }
                set(&mut p.tap, a.tap);
                set(&mut p.scoring.backend, a.backend);
                if a.lda_dim.is_some() {
                    p.scoring.lda_dim = a.lda_dim;
                }
                set(&mut p.scoring.plda_iters, a.plda_iters);
            }
            (Sub::AblateRelu(a), Command::AblateRelu(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.split, a.split);
                set(&mut p.trials, a.trials);
                set(&mut p.preset, a.net.preset);
                set(&mut p.pooling, a.net.pooling);
                a.hyper.apply(&mut p.hyper);
                if a.lda_dim.is_some() {
                    p.lda_dim = a.lda_dim;
                }
            }
            (Sub::AnalyzeBroad(a), Command::AnalyzeBroad(p)) => {
                set(&mut p.corpus, a.common.corpus);
                set(&mut p.split, a.common.split);
                if !a.common.checkpoints.is_empty() {
                    p.checkpoints = a.common.checkpoints;
                }
                set(&mut p.layers, a.common.layers);
            }
            (Sub::Probe(a), Command::Probe(p)) => {
                set(&mut p.corpus, a.common.corpus);
                set(&mut p.split, a.common.split);
                if !a.common.checkpoints.is_empty() {
                    p.checkpoints = a.common.checkpoints;
                }
                set(&mut p.layers, a.common.layers);
                set(&mut p.probe.max_epochs, a.max_epochs);
                set(&mut p.probe.lr, a.probe_lr);
            }
            (Sub::CriticalPhones(a), Command::CriticalPhones(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.checkpoint, a.checkpoint);
                if a.split.is_some() {
                    p.split = a.split;
                }
                set(&mut p.subset, a.subset);
            }
            (Sub::Simmatrix(a), Command::Simmatrix(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.checkpoint, a.checkpoint);
                set(&mut p.utterance_a, a.utterance_a);
                set(&mut p.utterance_b, a.utterance_b);
                set(&mut p.layer, a.layer);
            }
            (Sub::Project(a), Command::Project(p)) => {
                set(&mut p.corpus, a.corpus);
                set(&mut p.checkpoint, a.checkpoint);
                if a.split.is_some() {
                    p.split = a.split;
                }
                set(&mut p.subset, a.subset);
                set(&mut p.layer, a.layer);
            }
            (Sub::Report(a), Command::Report(p)) => {
                if !a.inputs.is_empty() {
                    p.inputs = a.inputs;
                }
            }
            _ => unreachable!("variant checked by the caller"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub utts_per_speaker: Option<usize>,
    #[arg(long)]
    pub phones_per_utt: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Only this phone carries speaker identity.
    #[arg(long)]
    pub critical_phone: Option<String>,
    /// Utterances per speaker held out for evaluation.
    #[arg(long)]
    pub held_out: Option<usize>,
    /// Trials in the evaluation list.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long, value_parser = preset)]
    pub preset: Option<Preset>,
    #[arg(long, value_parser = pooling)]
    pub pooling: Option<Pooling>,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl HyperArgs {
    fn apply(self, h: &mut spkemb::model::TrainConfig) {
        if let Some(v) = self.epochs {
            h.epochs = v;
        }
        if let Some(v) = self.lr {
            h.lr = v;
        }
        if let Some(v) = self.batch_size {
            h.batch_size = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub relu_before_fc2: Option<bool>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = tap)]
    pub tap: Option<Tap>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = tap)]
    pub tap: Option<Tap>,
    #[arg(long, value_parser = backend)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub lda_dim: Option<usize>,
    #[arg(long)]
    pub plda_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub lda_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LayerSweepArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Checkpoint files or directories of checkpoints.
    #[arg(long, num_args = 1..)]
    pub checkpoints: Vec<PathBuf>,
    /// Comma-separated layer numbers, 1 to 6.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct BroadArgs {
    #[command(flatten)]
    pub common: LayerSweepArgs,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: LayerSweepArgs,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub probe_lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = subset)]
    pub subset: Option<Subset>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub utterance_a: Option<String>,
    #[arg(long)]
    pub utterance_b: Option<String>,
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = subset)]
    pub subset: Option<Subset>,
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories to collate.
    pub inputs: Vec<PathBuf>,
}
