//! RIFF PCM 16-bit mono reading and writing.

use std::path::Path;

use crate::error::{Error, Result};

const SCALE: f64 = 32768.0;

/// Quantizes an amplitude to the 16-bit grid used on disk.
pub fn quantize(x: f64) -> i16 {
    (x * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn dequantize(q: i16) -> f64 {
    f64::from(q) / SCALE
}

/// Reads a 16-bit PCM mono file, returning samples in [-1, 1) and the rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::Load {
            path: path.to_path_buf(),
            source,
        },
        other => format_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_err(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format_err(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(dequantize))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format_err(e.to_string()))?;
    if samples.is_empty() {
        return Err(format_err("no samples".into()));
    }
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &x in samples {
        writer.write_sample(quantize(x)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)?;
    Ok(())
}
