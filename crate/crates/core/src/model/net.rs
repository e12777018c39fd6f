use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Pooling, SpeakerNetConfig, Tap};
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::nn::{
    avg_pool, avg_pool_backward, read_checkpoint, relu, relu_backward, softmax_xent, stats_pool,
    stats_pool_backward, write_checkpoint, Affine, CheckpointHeader, Conv1d, Tensor, TensorSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerNet {
    config: SpeakerNetConfig,
    convs: Vec<Conv1d>,
    fc1: Affine,
    fc2: Affine,
    output: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutput {
    pub logits: Vec<f64>,
    /// fc1 output before any activation.
    pub fc1_tap: Vec<f64>,
    /// fc2 output before the ReLU.
    pub fc2_tap: Vec<f64>,
}

impl SegmentOutput {
    pub fn tap(&self, tap: Tap) -> &[f64] {
        match tap {
            Tap::Fc1 => &self.fc1_tap,
            Tap::Fc2 => &self.fc2_tap,
        }
    }
}

/// Per-frame vectors of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEmbeddings {
    pub utterance_id: String,
    /// 1-based: conv layers first, then fc1 and fc2.
    pub layer: usize,
    pub rate_ms: f64,
    pub vectors: Vec<Vec<f64>>,
    /// Receptive-field centre of each frame, in samples.
    pub center_samples: Vec<usize>,
}

impl FrameEmbeddings {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for v in &self.vectors {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.vectors.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Intermediate values kept for the backward pass.
pub(crate) struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    conv_pre: Vec<Tensor>,
    top: Tensor,
    pooled: Tensor,
    h1: Tensor,
    a1: Tensor,
    h2: Tensor,
    a2: Tensor,
    pub(crate) logits: Tensor,
}

/// Metadata stored alongside checkpointed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: SpeakerNetConfig,
    pub epoch: usize,
    /// Speaker id for each output unit.
    pub speakers: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub net: SpeakerNet,
    pub meta: CheckpointMeta,
    pub update_count: u64,
    pub lr: f64,
}

/// Builds a `[dim, T]` tensor from frames `start, start+1, ...` of `fm`,
/// wrapping around when the utterance is shorter than `len`.
pub fn feature_window(fm: &FeatureMatrix, start: usize, len: usize) -> Result<Tensor> {
    if fm.n_frames == 0 || len == 0 {
        return Err(Error::TooShort {
            have: fm.n_frames,
            need: len.max(1),
            unit: "frames",
        });
    }
    let d = fm.dim;
    let mut data = vec![0.0; d * len];
    for j in 0..len {
        let row = fm.frame((start + j) % fm.n_frames);
        for (i, v) in row.iter().enumerate() {
            data[i * len + j] = *v;
        }
    }
    Tensor::new(vec![d, len], data)
}

impl SpeakerNet {
    /// Kaiming-uniform weights and zero biases, drawn in layer order from a
    /// ChaCha8 stream seeded with `seed`. The softmax layer's weights are
    /// then zeroed: it has no ReLU after it, and a Kaiming draw there starts
    /// training with saturated logits that kill most fc2 units.
    pub fn build(config: SpeakerNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::with_capacity(config.n_conv());
        let mut c_in = config.input_dim;
        for ((c, k), s) in config
            .conv_channels
            .iter()
            .zip(&config.kernels)
            .zip(&config.strides)
        {
            convs.push(Conv1d::init(c_in, *c, *k, *s, &mut rng)?);
            c_in = *c;
        }
        let fc1 = Affine::init(config.pooled_dim(), config.fc1, &mut rng)?;
        let fc2 = Affine::init(config.fc1, config.embedding, &mut rng)?;
        let mut output = Affine::init(config.embedding, config.n_speakers, &mut rng)?;
        output.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        let net = SpeakerNet {
            config,
            convs,
            fc1,
            fc2,
            output,
        };
        net.audit()?;
        Ok(net)
    }

    /// Checks every parameter shape against the config.
    pub fn audit(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let specs = self.param_specs();
        let mut expected = Vec::new();
        let mut c_in = c.input_dim;
        for (ch, k) in c.conv_channels.iter().zip(&c.kernels) {
            expected.push(vec![*ch, c_in, *k]);
            expected.push(vec![*ch]);
            c_in = *ch;
        }
        for (o, i) in [
            (c.fc1, c.pooled_dim()),
            (c.embedding, c.fc1),
            (c.n_speakers, c.embedding),
        ] {
            expected.push(vec![o, i]);
            expected.push(vec![o]);
        }
        if specs.len() != expected.len() {
            return Err(Error::Config(format!(
                "{} parameter tensors, config implies {}",
                specs.len(),
                expected.len()
            )));
        }
        for (spec, want) in specs.iter().zip(&expected) {
            if &spec.shape != want {
                return Err(Error::Config(format!(
                    "{} has shape {:?}, config implies {:?}",
                    spec.name, spec.shape, want
                )));
            }
        }
        for (conv, s) in self.convs.iter().zip(&c.strides) {
            if conv.stride != *s {
                return Err(Error::Config("conv stride differs from config".into()));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &SpeakerNetConfig {
        &self.config
    }

    pub fn min_frames(&self) -> usize {
        self.config.min_frames()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Output width of each frame-mode layer, 1-based order.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = self.config.conv_channels.clone();
        w.push(self.config.fc1);
        w.push(self.config.embedding);
        w
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.convs.len() {
            names.push(format!("conv{}.weight", i + 1));
            names.push(format!("conv{}.bias", i + 1));
        }
        for layer in ["fc1", "fc2", "output"] {
            names.push(format!("{layer}.weight"));
            names.push(format!("{layer}.bias"));
        }
        names
    }

    fn param_specs(&self) -> Vec<TensorSpec> {
        self.param_names()
            .into_iter()
            .zip(self.params())
            .map(|(name, t)| TensorSpec {
                name,
                shape: t.shape().to_vec(),
            })
            .collect()
    }

    /// All parameters in a fixed order: conv weights and biases, then fc1,
    /// fc2 and the output layer.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for a in [&self.fc1, &self.fc2, &self.output] {
            out.push(&a.weight);
            out.push(&a.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for a in [&mut self.fc1, &mut self.fc2, &mut self.output] {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        out
    }

    fn check_frames(&self, fm: &FeatureMatrix) -> Result<()> {
        if fm.dim != self.config.input_dim {
            return Err(Error::Shape(format!(
                "net expects {}-d features, got {}",
                self.config.input_dim, fm.dim
            )));
        }
        let need = self.min_frames();
        if fm.n_frames < need {
            return Err(Error::TooShort {
                have: fm.n_frames,
                need,
                unit: "frames",
            });
        }
        Ok(())
    }

    fn pool(&self, top: &Tensor) -> Result<Tensor> {
        match self.config.pooling {
            Pooling::Statistics => stats_pool(top),
            Pooling::Average => avg_pool(top),
        }
    }

    /// Forward pass over a `[dim, T]` input, keeping what backprop needs.
    pub(crate) fn forward_cached(&self, x: Tensor) -> Result<ForwardCache> {
        let t = x.shape().get(1).copied().unwrap_or(0);
        if t < self.min_frames() {
            return Err(Error::TooShort {
                have: t,
                need: self.min_frames(),
                unit: "frames",
            });
        }
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut conv_pre = Vec::with_capacity(self.convs.len());
        let mut cur = x;
        for conv in &self.convs {
            let pre = conv.forward(&cur)?;
            let act = relu(&pre)?;
            conv_inputs.push(cur);
            conv_pre.push(pre);
            cur = act;
        }
        let top = cur;
        let pooled = self.pool(&top)?;
        let h1 = self.fc1.forward(&pooled)?;
        let a1 = if self.config.relu_before_fc2 {
            relu(&h1)?
        } else {
            h1.clone()
        };
        let h2 = self.fc2.forward(&a1)?;
        let a2 = relu(&h2)?;
        let logits = self.output.forward(&a2)?;
        Ok(ForwardCache {
            conv_inputs,
            conv_pre,
            top,
            pooled,
            h1,
            a1,
            h2,
            a2,
            logits,
        })
    }

    /// Gradients of the loss with respect to every parameter, in
    /// [`SpeakerNet::params`] order, given the gradient at the logits.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &Tensor,
    ) -> Result<Vec<Tensor>> {
        let n = self.convs.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; 2 * n + 6];

        let go = self.output.backward(&cache.a2, grad_logits)?;
        grads[2 * n + 4] = Some(go.weight);
        grads[2 * n + 5] = Some(go.bias);
        let g_h2 = relu_backward(&cache.h2, &go.input)?;

        let g2 = self.fc2.backward(&cache.a1, &g_h2)?;
        grads[2 * n + 2] = Some(g2.weight);
        grads[2 * n + 3] = Some(g2.bias);
        let g_h1 = if self.config.relu_before_fc2 {
            relu_backward(&cache.h1, &g2.input)?
        } else {
            g2.input
        };

        let g1 = self.fc1.backward(&cache.pooled, &g_h1)?;
        grads[2 * n] = Some(g1.weight);
        grads[2 * n + 1] = Some(g1.bias);

        let mut g_act = match self.config.pooling {
            Pooling::Statistics => stats_pool_backward(&cache.top, &g1.input)?,
            Pooling::Average => avg_pool_backward(&cache.top, &g1.input)?,
        };
        for l in (0..n).rev() {
            let g_pre = relu_backward(&cache.conv_pre[l], &g_act)?;
            let gc = self.convs[l].backward(&cache.conv_inputs[l], &g_pre)?;
            grads[2 * l] = Some(gc.weight);
            grads[2 * l + 1] = Some(gc.bias);
            g_act = gc.input;
        }
        Ok(grads
            .into_iter()
            .map(|g| g.expect("every slot filled"))
            .collect())
    }

    /// Cross-entropy loss, whether the argmax matched, and parameter
    /// gradients for one `[dim, T]` example.
    pub fn loss_and_gradients(&self, x: Tensor, label: usize) -> Result<(f64, bool, Vec<Tensor>)> {
        let cache = self.forward_cached(x)?;
        let (loss, g) = softmax_xent(&cache.logits, label)?;
        let correct = argmax(cache.logits.data()) == label;
        let grads = self.backward(&cache, &g)?;
        Ok((loss, correct, grads))
    }

    /// Whole-utterance forward pass with fc1 and fc2 taps.
    pub fn forward_segment(&self, fm: &FeatureMatrix) -> Result<SegmentOutput> {
        self.check_frames(fm)?;
        let cache = self.forward_cached(feature_window(fm, 0, fm.n_frames)?)?;
        Ok(SegmentOutput {
            logits: cache.logits.into_data(),
            fc1_tap: cache.h1.into_data(),
            fc2_tap: cache.h2.into_data(),
        })
    }

    pub fn extract_embedding(&self, fm: &FeatureMatrix, tap: Tap) -> Result<Vec<f64>> {
        let out = self.forward_segment(fm)?;
        Ok(match tap {
            Tap::Fc1 => out.fc1_tap,
            Tap::Fc2 => out.fc2_tap,
        })
    }

    /// Per-frame outputs of every layer with pooling moved past fc2: conv
    /// layers after their ReLU, fc1 before any activation and fc2 before its
    /// ReLU. Only average pooling commutes with the affine layers, so
    /// statistics-pooling nets are refused.
    pub fn frame_mode_forward(&self, fm: &FeatureMatrix) -> Result<Vec<FrameEmbeddings>> {
        if self.config.pooling == Pooling::Statistics {
            return Err(Error::UnsupportedMode(
                "frame mode needs average pooling; the standard deviation is not linear in \
                 the frames, so it cannot be moved past the affine layers"
                    .into(),
            ));
        }
        self.check_frames(fm)?;
        let geometry = self.config.geometry();
        let mut cur = feature_window(fm, 0, fm.n_frames)?;
        let mut per_layer = Vec::with_capacity(self.config.n_frame_layers());
        for conv in &self.convs {
            cur = relu(&conv.forward(&cur)?)?;
            per_layer.push(cur.clone());
        }
        let h1 = self.fc1.forward(&cur)?;
        let a1 = if self.config.relu_before_fc2 {
            relu(&h1)?
        } else {
            h1.clone()
        };
        let h2 = self.fc2.forward(&a1)?;
        per_layer.push(h1);
        per_layer.push(h2);

        per_layer
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let layer = i + 1;
                let n = t.shape()[1];
                Ok(FrameEmbeddings {
                    utterance_id: fm.utterance_id.clone(),
                    layer,
                    rate_ms: geometry.rate_ms(layer, fm)?,
                    vectors: (0..n).map(|j| t.column(j)).collect(),
                    center_samples: geometry.center_samples(layer, fm)?,
                })
            })
            .collect()
    }

    pub fn save(
        &self,
        path: &Path,
        meta: &CheckpointMeta,
        update_count: u64,
        lr: f64,
    ) -> Result<()> {
        if meta.config != self.config {
            return Err(Error::Checkpoint(
                "metadata config differs from the net".into(),
            ));
        }
        let header = CheckpointHeader {
            meta: serde_json::to_value(meta)?,
            tensors: self.param_specs(),
            update_count,
            lr,
        };
        write_checkpoint(path, &header, &self.params())
    }

    pub fn load(path: &Path) -> Result<LoadedCheckpoint> {
        let (header, tensors) = read_checkpoint(path)?;
        let meta: CheckpointMeta = serde_json::from_value(header.meta)?;
        let mut net = SpeakerNet::build(meta.config.clone(), 0)?;
        let names = net.param_names();
        if tensors.len() != names.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, config needs {}",
                tensors.len(),
                names.len()
            )));
        }
        for ((spec, name), (dst, src)) in header
            .tensors
            .iter()
            .zip(&names)
            .zip(net.params_mut().into_iter().zip(tensors))
        {
            if &spec.name != name || dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not fit {name} {:?}",
                    spec.name,
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src;
        }
        Ok(LoadedCheckpoint {
            net,
            meta,
            update_count: header.update_count,
            lr: header.lr,
        })
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, x)| {
            if *x > bv {
                (i, *x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureMatrix::new("u", n, dim, data, 16000, 400, 160).unwrap()
    }

    fn small(pooling: Pooling) -> SpeakerNetConfig {
        SpeakerNetConfig {
            conv_channels: vec![6, 5, 4, 7],
            fc1: 5,
            embedding: 3,
            crop_frames: 20,
            ..SpeakerNetConfig::desk(4)
        }
        .with_pooling(pooling)
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = SpeakerNet::build(SpeakerNetConfig::desk(5), 3).unwrap();
        let b = SpeakerNet::build(SpeakerNetConfig::desk(5), 3).unwrap();
        assert_eq!(a, b);
        let c = SpeakerNet::build(SpeakerNetConfig::desk(5), 4).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.n_params(), a.config().n_params());
    }

    #[test]
    fn shapes_and_taps() {
        let net = SpeakerNet::build(small(Pooling::Statistics), 1).unwrap();
        let out = net.forward_segment(&feats(30, 40, 2)).unwrap();
        assert_eq!(out.logits.len(), 4);
        assert_eq!(out.fc1_tap.len(), 5);
        assert_eq!(out.fc2_tap.len(), 3);
        assert!(out.logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn too_short_reports_minimum() {
        let net = SpeakerNet::build(small(Pooling::Average), 1).unwrap();
        match net.forward_segment(&feats(10, 40, 2)) {
            Err(Error::TooShort {
                have: 10, need: 11, ..
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(net.forward_segment(&feats(11, 40, 2)).is_ok());
    }

    #[test]
    fn statistics_refuses_frame_mode() {
        let net = SpeakerNet::build(small(Pooling::Statistics), 1).unwrap();
        assert!(matches!(
            net.frame_mode_forward(&feats(30, 40, 2)),
            Err(Error::UnsupportedMode(_))
        ));
    }

    #[test]
    fn frame_mode_lengths_and_rates() {
        let net = SpeakerNet::build(small(Pooling::Average), 1).unwrap();
        let fm = feats(31, 40, 5);
        let layers = net.frame_mode_forward(&fm).unwrap();
        let lens: Vec<usize> = layers.iter().map(|l| l.len()).collect();
        assert_eq!(lens, vec![27, 11, 11, 11, 11, 11]);
        let rates: Vec<f64> = layers.iter().map(|l| l.rate_ms).collect();
        assert_eq!(rates, vec![10.0, 20.0, 20.0, 20.0, 20.0, 20.0]);
        let dims: Vec<usize> = layers.iter().map(|l| l.dim()).collect();
        assert_eq!(dims, net.layer_widths());
    }

    #[test]
    fn wrap_window() {
        let fm = feats(3, 2, 1);
        let w = feature_window(&fm, 1, 5).unwrap();
        let cols: Vec<Vec<f64>> = (0..5).map(|j| w.column(j)).collect();
        assert_eq!(cols[0], fm.frame(1));
        assert_eq!(cols[2], fm.frame(0));
        assert_eq!(cols[4], fm.frame(2));
    }

    #[test]
    fn argmax_first_of_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
