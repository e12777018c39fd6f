//! The speaker network: configuration, training, segment embeddings and
//! frame-level embeddings.
//!
//! Frame mode relies on average pooling commuting with the affine layers:
//! `mean_t(W2 (W1 c_t + b1) + b2) = W2 (W1 mean_t(c_t) + b1) + b2`. Moving
//! the pooling past fc2 therefore leaves the segment embedding unchanged
//! and yields one vector per frame at every layer.

mod config;
mod net;
mod train;

pub use config::{Pooling, SpeakerNetConfig, Tap};
pub use net::{
    feature_window, CheckpointMeta, FrameEmbeddings, LoadedCheckpoint, SegmentOutput, SpeakerNet,
};
pub use train::{
    build_training_set, default_checkpoint_epochs, train, write_train_log, AugmentConfig,
    Checkpoint, TrainConfig, TrainExample, TrainLogRow, TrainOutcome, TrainingSet,
};
