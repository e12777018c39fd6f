use serde::{Deserialize, Serialize};

use super::cosine;
use crate::corpus::PhoneAlignment;
use crate::error::{Error, Result};
use crate::model::FrameEmbeddings;

/// Frame-by-frame cosine similarities between two utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub utterance_a: String,
    pub utterance_b: String,
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, rows index frames of A.
    pub values: Vec<f64>,
    /// Cells set to 0 because one of the frames was a zero vector.
    pub zero_cells: usize,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        SimilarityMatrix {
            utterance_a: self.utterance_b.clone(),
            utterance_b: self.utterance_a.clone(),
            layer: self.layer,
            rows: self.cols,
            cols: self.rows,
            values,
            zero_cells: self.zero_cells,
        }
    }
}

pub fn cross_utterance_similarity(
    a: &FrameEmbeddings,
    b: &FrameEmbeddings,
) -> Result<SimilarityMatrix> {
    if a.layer != b.layer || a.rate_ms != b.rate_ms {
        return Err(Error::Analysis(format!(
            "similarity needs frames from one layer, got layer {} ({} ms) and {} ({} ms)",
            a.layer, a.rate_ms, b.layer, b.rate_ms
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "frame dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut values = Vec::with_capacity(a.len() * b.len());
    let mut zero_cells = 0;
    for u in &a.vectors {
        for v in &b.vectors {
            values.push(cosine(u, v).unwrap_or_else(|| {
                zero_cells += 1;
                0.0
            }));
        }
    }
    Ok(SimilarityMatrix {
        utterance_a: a.utterance_id.clone(),
        utterance_b: b.utterance_id.clone(),
        layer: a.layer,
        rows: a.len(),
        cols: b.len(),
        values,
        zero_cells,
    })
}

/// `(first frame index, phone)` for every segment that covers a frame.
pub fn phone_ticks(fe: &FrameEmbeddings, alignment: &PhoneAlignment) -> Vec<(usize, String)> {
    let mut ticks: Vec<(usize, String)> = Vec::new();
    let mut last = None;
    for (i, c) in fe.center_samples.iter().enumerate() {
        let seg = alignment.segment_at(*c);
        if let Some(s) = seg.filter(|_| seg != last) {
            ticks.push((i, alignment.segments[s].phone.clone()));
        }
        last = seg;
    }
    ticks
}
