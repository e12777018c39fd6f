//! TIMIT `.PHN` alignment files: one `start end label` triplet per line.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phones::{lookup_broad_class, BroadClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub start_sample: usize,
    pub end_sample: usize,
    pub phone: String,
    pub broad_class: BroadClass,
}

impl PhoneSegment {
    pub fn new(start_sample: usize, end_sample: usize, phone: impl Into<String>) -> Self {
        let phone = phone.into();
        let broad_class = super::phones::phone_to_broad_class(&phone);
        PhoneSegment {
            start_sample,
            end_sample,
            phone,
            broad_class,
        }
    }

    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }

    pub fn contains(&self, sample: usize) -> bool {
        (self.start_sample..self.end_sample).contains(&sample)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneAlignment {
    pub utterance_id: String,
    pub segments: Vec<PhoneSegment>,
    /// Number of segments whose label was outside the phone inventory.
    pub unknown_phones: usize,
}

impl PhoneAlignment {
    /// Builds an alignment, enforcing ordering and non-overlap.
    pub fn new(utterance_id: impl Into<String>, segments: Vec<PhoneSegment>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        validate_segments(&utterance_id, &segments)?;
        let unknown_phones = segments
            .iter()
            .filter(|s| lookup_broad_class(&s.phone).is_none())
            .count();
        Ok(PhoneAlignment {
            utterance_id,
            segments,
            unknown_phones,
        })
    }

    /// Segment covering `sample`, if any.
    pub fn segment_at(&self, sample: usize) -> Option<usize> {
        let idx = self.segments.partition_point(|s| s.end_sample <= sample);
        match self.segments.get(idx) {
            Some(seg) if seg.contains(sample) => Some(idx),
            _ => None,
        }
    }

    pub fn end_sample(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end_sample)
    }

    pub fn to_phn_string(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            let _ = writeln!(out, "{} {} {}", seg.start_sample, seg.end_sample, seg.phone);
        }
        out
    }
}

fn validate_segments(utterance: &str, segments: &[PhoneSegment]) -> Result<()> {
    for (i, seg) in segments.iter().enumerate() {
        if seg.start_sample >= seg.end_sample {
            return Err(Error::Alignment {
                utterance: utterance.to_string(),
                reason: format!(
                    "segment {i} ('{}') has empty range [{}, {})",
                    seg.phone, seg.start_sample, seg.end_sample
                ),
            });
        }
    }
    for (i, pair) in segments.windows(2).enumerate() {
        if pair[1].start_sample < pair[0].end_sample {
            return Err(Error::Alignment {
                utterance: utterance.to_string(),
                reason: format!(
                    "segment {} ('{}' at {}) overlaps segment {} ('{}' ending at {})",
                    i + 1,
                    pair[1].phone,
                    pair[1].start_sample,
                    i,
                    pair[0].phone,
                    pair[0].end_sample
                ),
            });
        }
    }
    Ok(())
}

/// Parses `.PHN` text. `path` is only used for error messages.
pub fn parse_phn_str(text: &str, utterance_id: &str, path: &Path) -> Result<PhoneAlignment> {
    let mut segments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("expected 'start end label', got {} fields", fields.len()),
            });
        }
        let boundary = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("boundary '{s}' is not a non-negative integer"),
            })
        };
        let start = boundary(fields[0])?;
        let end = boundary(fields[1])?;
        segments.push(PhoneSegment::new(start, end, fields[2]));
    }
    let alignment = PhoneAlignment::new(utterance_id, segments)?;
    if alignment.unknown_phones > 0 {
        log::warn!(
            "{}: {} segment(s) with unknown phone labels mapped to Others",
            path.display(),
            alignment.unknown_phones
        );
    }
    Ok(alignment)
}

/// Reads a `.PHN` file; the utterance id is the file stem.
pub fn parse_phn(path: &Path) -> Result<PhoneAlignment> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_phn_str(&text, &id, path)
}
