use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::LayerGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Mean and standard deviation per channel.
    Statistics,
    /// Mean per channel; required for frame-level embeddings.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    Fc1,
    Fc2,
}

impl Tap {
    pub fn as_str(self) -> &'static str {
        match self {
            Tap::Fc1 => "fc1",
            Tap::Fc2 => "fc2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerNetConfig {
    pub input_dim: usize,
    pub conv_channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub fc1: usize,
    pub embedding: usize,
    pub n_speakers: usize,
    pub pooling: Pooling,
    /// ReLU between fc1 and fc2. Off by default: the embedding layer then
    /// sees a purely affine function of the pooled statistics.
    pub relu_before_fc2: bool,
    /// Training crop length in frames (2 s at a 10 ms shift).
    pub crop_frames: usize,
}

impl SpeakerNetConfig {
    /// Full-size network: 1000/1000/1000/1500 filters, fc1 1500, 600-d embedding.
    pub fn paper(n_speakers: usize) -> Self {
        SpeakerNetConfig {
            input_dim: 40,
            conv_channels: vec![1000, 1000, 1000, 1500],
            kernels: vec![5, 7, 1, 1],
            strides: vec![1, 2, 1, 1],
            fc1: 1500,
            embedding: 600,
            n_speakers,
            pooling: Pooling::Statistics,
            relu_before_fc2: false,
            crop_frames: 200,
        }
    }

    /// Same topology at desk scale: 64/64/64/96 filters, fc1 96, 32-d embedding.
    pub fn desk(n_speakers: usize) -> Self {
        SpeakerNetConfig {
            conv_channels: vec![64, 64, 64, 96],
            fc1: 96,
            embedding: 32,
            ..SpeakerNetConfig::paper(n_speakers)
        }
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn with_relu_before_fc2(mut self, on: bool) -> Self {
        self.relu_before_fc2 = on;
        self
    }

    pub fn geometry(&self) -> LayerGeometry {
        LayerGeometry {
            kernels: self.kernels.clone(),
            strides: self.strides.clone(),
        }
    }

    pub fn n_conv(&self) -> usize {
        self.conv_channels.len()
    }

    /// Conv layers plus fc1 and fc2.
    pub fn n_frame_layers(&self) -> usize {
        self.n_conv() + 2
    }

    pub fn pooled_dim(&self) -> usize {
        let last = self.conv_channels.last().copied().unwrap_or(0);
        match self.pooling {
            Pooling::Statistics => 2 * last,
            Pooling::Average => last,
        }
    }

    pub fn min_frames(&self) -> usize {
        self.geometry().min_input_frames()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.conv_channels.len();
        if n == 0 {
            return Err(Error::Config(
                "at least one convolution layer is required".into(),
            ));
        }
        if self.kernels.len() != n || self.strides.len() != n {
            return Err(Error::Config(format!(
                "{n} conv channel counts but {} kernels and {} strides",
                self.kernels.len(),
                self.strides.len()
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.conv_channels.contains(&0) || self.fc1 == 0 || self.embedding == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.kernels.contains(&0) || self.strides.contains(&0) {
            return Err(Error::Config(
                "kernels and strides must be at least 1".into(),
            ));
        }
        if self.n_speakers < 2 {
            return Err(Error::Config(format!(
                "n_speakers = {}, need at least 2",
                self.n_speakers
            )));
        }
        if self.crop_frames < self.min_frames() {
            return Err(Error::Config(format!(
                "crop of {} frames is shorter than the {} the convolutions need",
                self.crop_frames,
                self.min_frames()
            )));
        }
        Ok(())
    }

    /// Parameter count implied by the config.
    pub fn n_params(&self) -> usize {
        let mut total = 0;
        let mut c_in = self.input_dim;
        for (c, k) in self.conv_channels.iter().zip(&self.kernels) {
            total += c * c_in * k + c;
            c_in = *c;
        }
        total += self.fc1 * self.pooled_dim() + self.fc1;
        total += self.embedding * self.fc1 + self.embedding;
        total += self.n_speakers * self.embedding + self.n_speakers;
        total
    }
}
