//! Frame → phone labelling at each network layer's analysis rate.
//!
//! A layer-`l` output frame is labelled by the phone covering the centre
//! sample of its receptive field. Layers past the convolution stack (the two
//! fully connected layers in frame mode) share the last convolution's timing.

use serde::{Deserialize, Serialize};

use super::mfcc::FeatureMatrix;
use crate::corpus::{BroadClass, PhoneAlignment};
use crate::error::{Error, Result};

/// Kernel sizes and strides of the valid-convolution stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for LayerGeometry {
    fn default() -> Self {
        LayerGeometry {
            kernels: vec![5, 7, 1, 1],
            strides: vec![1, 2, 1, 1],
        }
    }
}

impl LayerGeometry {
    /// Convolution layers plus the two frame-wise affine layers.
    pub fn n_layers(&self) -> usize {
        self.kernels.len() + 2
    }

    fn conv_index(&self, layer: usize) -> Result<usize> {
        if layer == 0 || layer > self.n_layers() {
            return Err(Error::Config(format!(
                "layer {layer} outside 1..={}",
                self.n_layers()
            )));
        }
        Ok(layer.min(self.kernels.len()) - 1)
    }

    /// Output length after layer `layer` for `t` input frames, `None` when
    /// the input does not survive the convolutions.
    pub fn output_frames(&self, layer: usize, t: usize) -> Result<Option<usize>> {
        let last = self.conv_index(layer)?;
        let mut len = t;
        for (k, s) in self.kernels.iter().zip(&self.strides).take(last + 1) {
            if len < *k {
                return Ok(None);
            }
            len = 1 + (len - k) / s;
        }
        Ok(Some(len))
    }

    /// Shortest input that yields at least one output frame at the top.
    pub fn min_input_frames(&self) -> usize {
        self.kernels
            .iter()
            .zip(&self.strides)
            .rev()
            .fold(1, |need, (k, s)| (need - 1) * s + k)
    }

    /// Product of strides up to and including `layer`.
    pub fn cumulative_stride(&self, layer: usize) -> Result<usize> {
        let last = self.conv_index(layer)?;
        Ok(self.strides[..=last].iter().product())
    }

    /// `(offset, step)` such that output frame `j` of `layer` is centred on
    /// input frame `offset + j * step`.
    pub fn center_map(&self, layer: usize) -> Result<(f64, f64)> {
        let last = self.conv_index(layer)?;
        let mut offset = 0.0;
        let mut step = 1.0;
        for (k, s) in self.kernels.iter().zip(&self.strides).take(last + 1) {
            offset += step * (*k as f64 - 1.0) / 2.0;
            step *= *s as f64;
        }
        Ok((offset, step))
    }

    /// Frame period of `layer` in milliseconds.
    pub fn rate_ms(&self, layer: usize, fm: &FeatureMatrix) -> Result<f64> {
        Ok(self.cumulative_stride(layer)? as f64 * fm.frame_shift_ms())
    }

    /// Centre sample of every output frame of `layer`.
    pub fn center_samples(&self, layer: usize, fm: &FeatureMatrix) -> Result<Vec<usize>> {
        let n = self.output_frames(layer, fm.n_frames)?.unwrap_or(0);
        let (offset, step) = self.center_map(layer)?;
        Ok((0..n)
            .map(|j| fm.center_sample(offset + j as f64 * step))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabel {
    /// Index into the alignment's segments, `None` outside every segment.
    pub segment: Option<usize>,
    pub phone: Option<String>,
    pub broad_class: BroadClass,
}

/// Segment index for each centre sample.
pub fn frame_segments(alignment: &PhoneAlignment, centers: &[usize]) -> Vec<Option<usize>> {
    centers.iter().map(|&c| alignment.segment_at(c)).collect()
}

/// Phone labels for every output frame of `layer` over the utterance `fm`.
pub fn frame_phone_labels(
    alignment: &PhoneAlignment,
    layer: usize,
    fm: &FeatureMatrix,
    geometry: &LayerGeometry,
) -> Result<Vec<FrameLabel>> {
    let centers = geometry.center_samples(layer, fm)?;
    Ok(frame_segments(alignment, &centers)
        .into_iter()
        .map(|seg| match seg {
            Some(i) => {
                let s = &alignment.segments[i];
                FrameLabel {
                    segment: Some(i),
                    phone: Some(s.phone.clone()),
                    broad_class: s.broad_class,
                }
            }
            None => FrameLabel {
                segment: None,
                phone: None,
                broad_class: BroadClass::Others,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PhoneSegment;

    fn fm(n_frames: usize) -> FeatureMatrix {
        FeatureMatrix::new("u", n_frames, 1, vec![0.0; n_frames], 16000, 400, 160).unwrap()
    }

    #[test]
    fn frame_counts_per_layer() {
        let g = LayerGeometry::default();
        assert_eq!(g.output_frames(1, 98).unwrap(), Some(94));
        assert_eq!(g.output_frames(2, 98).unwrap(), Some(44));
        assert_eq!(g.output_frames(6, 98).unwrap(), Some(44));
        assert_eq!(g.output_frames(2, 10).unwrap(), None);
        assert!(g.output_frames(7, 98).is_err());
        assert_eq!(g.min_input_frames(), 11);
        assert_eq!(g.output_frames(6, 11).unwrap(), Some(1));
    }

    #[test]
    fn rates() {
        let g = LayerGeometry::default();
        let f = fm(50);
        assert_eq!(g.rate_ms(1, &f).unwrap(), 10.0);
        for layer in 2..=6 {
            assert_eq!(g.rate_ms(layer, &f).unwrap(), 20.0);
        }
    }

    #[test]
    fn layer_one_has_one_label_per_output() {
        let g = LayerGeometry::default();
        let f = fm(98);
        let a = PhoneAlignment::new("u", vec![PhoneSegment::new(0, 16000, "s")]).unwrap();
        let labels = frame_phone_labels(&a, 1, &f, &g).unwrap();
        assert_eq!(labels.len(), 94);
        assert!(labels.iter().all(|l| l.phone.as_deref() == Some("s")));
    }

    #[test]
    fn uncovered_frames_are_others() {
        let g = LayerGeometry::default();
        let f = fm(30);
        let a = PhoneAlignment::new("u", vec![PhoneSegment::new(0, 1000, "iy")]).unwrap();
        let labels = frame_phone_labels(&a, 1, &f, &g).unwrap();
        let last = labels.last().unwrap();
        assert_eq!(last.phone, None);
        assert_eq!(last.broad_class, BroadClass::Others);
        assert_eq!(labels[0].broad_class, BroadClass::Vowels);
    }

    #[test]
    fn layer_two_is_strided_layer_one() {
        let g = LayerGeometry::default();
        let f = fm(120);
        let mut segs = Vec::new();
        let mut start = 0;
        for (i, len) in [700usize, 1300, 900, 2500, 400, 3100, 1800, 2600, 6000]
            .iter()
            .enumerate()
        {
            let phone = ["s", "iy", "n", "aa", "t", "er", "m", "z", "h#"][i];
            segs.push(PhoneSegment::new(start, start + len, phone));
            start += len;
        }
        let a = PhoneAlignment::new("u", segs).unwrap();
        let l1 = frame_phone_labels(&a, 1, &f, &g).unwrap();
        let l2 = frame_phone_labels(&a, 2, &f, &g).unwrap();
        // conv2 output k is centred on conv1 output 2k + 3
        for (k, lab) in l2.iter().enumerate() {
            assert_eq!(lab, &l1[2 * k + 3]);
        }
    }
}
