//! Plot-data writers: CSV tables, 8-bit PGM heatmaps with a JSON sidecar,
//! and phone histograms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and string rows verbatim.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tick {
    pub index: usize,
    pub label: String,
}

/// A row-major matrix to render as a grey-level image, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_ticks: Vec<Tick>,
    pub y_ticks: Vec<Tick>,
    /// Value mapped to black and white; the data range when unset.
    pub range: Option<(f64, f64)>,
}

impl Heatmap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Heatmap> {
        if rows * cols != values.len() || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "heatmap {rows}x{cols} with {} values",
                values.len()
            )));
        }
        Ok(Heatmap {
            rows,
            cols,
            values,
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            x_ticks: Vec::new(),
            y_ticks: Vec::new(),
            range: None,
        })
    }

    pub fn titled(mut self, title: &str, x_label: &str, y_label: &str) -> Self {
        self.title = title.into();
        self.x_label = x_label.into();
        self.y_label = y_label.into();
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some((lo, hi));
        self
    }

    pub fn with_ticks(mut self, x: Vec<Tick>, y: Vec<Tick>) -> Self {
        self.x_ticks = x;
        self.y_ticks = y;
        self
    }

    fn bounds(&self) -> (f64, f64) {
        self.range.unwrap_or_else(|| {
            let finite = self.values.iter().copied().filter(|v| v.is_finite());
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() {
                (lo, hi)
            } else {
                (0.0, 0.0)
            }
        })
    }

    /// Grey levels: `lo` maps to 0, `hi` to 255, values clamped, non-finite
    /// values and a degenerate range give 0.
    pub fn pixels(&self) -> Vec<u8> {
        let (lo, hi) = self.bounds();
        self.values
            .iter()
            .map(|v| {
                if !v.is_finite() || hi <= lo {
                    0
                } else {
                    (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
                }
            })
            .collect()
    }
}

/// What a PGM heatmap means, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub image: String,
    pub width: usize,
    pub height: usize,
    /// Value shown as black.
    pub min: f64,
    /// Value shown as white.
    pub max: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_ticks: Vec<Tick>,
    pub y_ticks: Vec<Tick>,
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

/// Writes a binary PGM (P5) image and its JSON sidecar.
pub fn write_pgm(path: &Path, map: &Heatmap) -> Result<HeatmapSidecar> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", map.cols, map.rows)?;
    f.write_all(&map.pixels())?;
    f.flush()?;
    let (min, max) = map.bounds();
    let sidecar = HeatmapSidecar {
        image: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        width: map.cols,
        height: map.rows,
        min,
        max,
        title: map.title.clone(),
        x_label: map.x_label.clone(),
        y_label: map.y_label.clone(),
        x_ticks: map.x_ticks.clone(),
        y_ticks: map.y_ticks.clone(),
    };
    write_json(&sidecar_path(path), &sidecar)?;
    Ok(sidecar)
}

/// Reads a P5 image written by [`write_pgm`]: `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|source| Error::Load {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_end(&mut bytes)?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected an 8-bit P5 image"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM dimensions"));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = bytes.get(pos + 1..).unwrap_or_default();
    if data.len() != w * h {
        return Err(bad("pixel count does not match the header"));
    }
    Ok((w, h, data.to_vec()))
}

/// `phone,count,rank_in_frequency_histogram` rows.
pub fn write_histogram(path: &Path, rows: &[(String, usize, usize)]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(p, c, r)| vec![p.clone(), c.to_string(), r.to_string()])
        .collect();
    write_table(
        path,
        &["phone", "count", "rank_in_frequency_histogram"],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_mapping() {
        let m = Heatmap::new(1, 4, vec![-1.0, 0.0, 1.0, f64::NAN])
            .unwrap()
            .with_range(-1.0, 1.0);
        assert_eq!(m.pixels(), vec![0, 128, 255, 0]);
        let flat = Heatmap::new(2, 1, vec![3.0, 3.0]).unwrap();
        assert_eq!(flat.pixels(), vec![0, 0]);
        assert!(Heatmap::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let m = Heatmap::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap()
            .titled("t", "x", "y")
            .with_ticks(
                vec![Tick {
                    index: 1,
                    label: "aa".into(),
                }],
                vec![],
            );
        let side = write_pgm(&path, &m).unwrap();
        assert_eq!((side.min, side.max), (0.0, 5.0));
        let (w, h, px) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![0, 51, 102, 153, 204, 255]);
        let text = std::fs::read_to_string(sidecar_path(&path)).unwrap();
        let back: HeatmapSidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(back, side);
    }
}
