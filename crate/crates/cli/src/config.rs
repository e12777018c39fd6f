//! Run records: one params struct per subcommand, loadable from JSON and
//! overridable from flags. The resolved record is written next to the
//! outputs, and passing it back through `--config` repeats the run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spkemb::analysis::ProbeConfig;
use spkemb::frontend::MfccConfig;
use spkemb::model::{Pooling, Tap, TrainConfig};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "version")]
    pub version: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub command: Command,
}

fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Synth(SynthParams),
    Mfcc(MfccParams),
    Train(TrainParams),
    Extract(ExtractParams),
    Score(ScoreParams),
    AblateRelu(AblateParams),
    AnalyzeBroad(BroadParams),
    Probe(ProbeParams),
    CriticalPhones(CriticalParams),
    Simmatrix(SimParams),
    Project(ProjectParams),
    Report(ReportParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Mfcc(_) => "mfcc",
            Command::Train(_) => "train",
            Command::Extract(_) => "extract",
            Command::Score(_) => "score",
            Command::AblateRelu(_) => "ablate-relu",
            Command::AnalyzeBroad(_) => "analyze-broad",
            Command::Probe(_) => "probe",
            Command::CriticalPhones(_) => "critical-phones",
            Command::Simmatrix(_) => "simmatrix",
            Command::Project(_) => "project",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Cosine,
    #[default]
    Plda,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Cosine => "cosine",
            Backend::Plda => "plda",
        }
    }
}

/// Which part of a split an analysis runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub speakers: usize,
    pub utts_per_speaker: usize,
    pub phones_per_utt: usize,
    pub sample_rate: u32,
    pub critical_phone: Option<String>,
    /// Utterances per speaker held out for evaluation.
    pub held_out: usize,
    /// Size of the trial list over the held-out utterances.
    pub trials: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            speakers: 20,
            utts_per_speaker: 10,
            phones_per_utt: 24,
            sample_rate: 16000,
            critical_phone: None,
            held_out: 3,
            trials: 400,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccParams {
    pub corpus: PathBuf,
    pub mfcc: MfccConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetParams {
    pub preset: Preset,
    pub pooling: Pooling,
    pub relu_before_fc2: bool,
}

impl Default for NetParams {
    fn default() -> Self {
        NetParams {
            preset: Preset::Desk,
            pooling: Pooling::Statistics,
            relu_before_fc2: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub corpus: PathBuf,
    /// Split file; training uses its `train` part, or every utterance when unset.
    pub split: Option<PathBuf>,
    pub net: NetParams,
    pub hyper: TrainConfig,
    pub mfcc: MfccConfig,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            corpus: PathBuf::new(),
            split: None,
            net: NetParams::default(),
            hyper: TrainConfig::desk(),
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub tap: Tap,
    pub mfcc: MfccConfig,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            corpus: PathBuf::new(),
            checkpoint: PathBuf::new(),
            tap: Tap::Fc2,
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendParams {
    pub backend: Backend,
    /// LDA output size; `min(dim, speakers - 1, 200)` when unset.
    pub lda_dim: Option<usize>,
    pub plda_iters: usize,
}

impl Default for BackendParams {
    fn default() -> Self {
        BackendParams {
            backend: Backend::Plda,
            lda_dim: None,
            plda_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub trials: PathBuf,
    /// The backend is fitted on the split's `train` utterances, or on every
    /// utterance outside the trial list when unset.
    pub split: Option<PathBuf>,
    pub tap: Tap,
    pub scoring: BackendParams,
    pub mfcc: MfccConfig,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            corpus: PathBuf::new(),
            checkpoint: PathBuf::new(),
            trials: PathBuf::new(),
            split: None,
            tap: Tap::Fc2,
            scoring: BackendParams::default(),
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateParams {
    pub corpus: PathBuf,
    pub split: PathBuf,
    pub trials: PathBuf,
    pub preset: Preset,
    pub pooling: Pooling,
    pub hyper: TrainConfig,
    pub lda_dim: Option<usize>,
    pub plda_iters: usize,
    pub mfcc: MfccConfig,
}

impl Default for AblateParams {
    fn default() -> Self {
        AblateParams {
            corpus: PathBuf::new(),
            split: PathBuf::new(),
            trials: PathBuf::new(),
            preset: Preset::Desk,
            pooling: Pooling::Statistics,
            hyper: TrainConfig::desk(),
            lda_dim: None,
            plda_iters: 10,
            mfcc: MfccConfig::default(),
        }
    }
}

fn all_layers() -> Vec<usize> {
    (1..=6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadParams {
    pub corpus: PathBuf,
    pub split: PathBuf,
    /// Checkpoint files, or directories whose checkpoints are all used.
    pub checkpoints: Vec<PathBuf>,
    pub layers: Vec<usize>,
    pub mfcc: MfccConfig,
}

impl Default for BroadParams {
    fn default() -> Self {
        BroadParams {
            corpus: PathBuf::new(),
            split: PathBuf::new(),
            checkpoints: Vec::new(),
            layers: all_layers(),
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    pub corpus: PathBuf,
    pub split: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub layers: Vec<usize>,
    pub probe: ProbeConfig,
    pub mfcc: MfccConfig,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            corpus: PathBuf::new(),
            split: PathBuf::new(),
            checkpoints: Vec::new(),
            layers: all_layers(),
            probe: ProbeConfig::default(),
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalParams {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Option<PathBuf>,
    pub subset: Subset,
    pub mfcc: MfccConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub utterance_a: String,
    pub utterance_b: String,
    pub layer: usize,
    pub mfcc: MfccConfig,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            corpus: PathBuf::new(),
            checkpoint: PathBuf::new(),
            utterance_a: String::new(),
            utterance_b: String::new(),
            layer: 6,
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectParams {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Option<PathBuf>,
    pub subset: Subset,
    pub layer: usize,
    pub mfcc: MfccConfig,
}

impl Default for ProjectParams {
    fn default() -> Self {
        ProjectParams {
            corpus: PathBuf::new(),
            checkpoint: PathBuf::new(),
            split: None,
            subset: Subset::All,
            layer: 6,
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    /// Output directories of earlier runs.
    pub inputs: Vec<PathBuf>,
}
