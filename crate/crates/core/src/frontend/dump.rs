//! Binary feature dumps: `(T, dim)` as two little-endian u64, then `T*dim`
//! little-endian f64 values row by row. A JSON sidecar carries the config.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mfcc::{FeatureMatrix, MfccConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub utterance_id: String,
    pub n_frames: usize,
    pub dim: usize,
    pub sample_rate: u32,
    pub window_samples: usize,
    pub shift_samples: usize,
    pub cmn: bool,
    pub config: MfccConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_feature_dump(
    path: &Path,
    fm: &FeatureMatrix,
    config: &MfccConfig,
    cmn_applied: bool,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&(fm.n_frames as u64).to_le_bytes())?;
    w.write_all(&(fm.dim as u64).to_le_bytes())?;
    for v in &fm.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = DumpSidecar {
        utterance_id: fm.utterance_id.clone(),
        n_frames: fm.n_frames,
        dim: fm.dim,
        sample_rate: fm.sample_rate,
        window_samples: fm.window_samples,
        shift_samples: fm.shift_samples,
        cmn: cmn_applied,
        config: config.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_feature_dump(path: &Path) -> Result<(FeatureMatrix, DumpSidecar)> {
    let load = |source| Error::Load {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(load)?;
    let sidecar: DumpSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path)).map_err(load)?)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let t = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != t * dim * 8 {
        return Err(bad(format!(
            "header says {t}x{dim} but body holds {} bytes",
            body.len()
        )));
    }
    if (t, dim) != (sidecar.n_frames, sidecar.dim) {
        return Err(bad("sidecar shape disagrees with header".into()));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let fm = FeatureMatrix::new(
        sidecar.utterance_id.clone(),
        t,
        dim,
        data,
        sidecar.sample_rate,
        sidecar.window_samples,
        sidecar.shift_samples,
    )?;
    Ok((fm, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.feats");
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.3).collect();
        let fm = FeatureMatrix::new("u", 4, 3, data, 16000, 400, 160).unwrap();
        write_feature_dump(&path, &fm, &MfccConfig::default(), true).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 12 * 8);
        assert_eq!(&bytes[0..8], &4u64.to_le_bytes());
        let (back, side) = read_feature_dump(&path).unwrap();
        assert_eq!(back, fm);
        assert!(side.cmn);
    }

    #[test]
    fn truncated_body_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.feats");
        let fm = FeatureMatrix::new("u", 2, 2, vec![0.0; 4], 16000, 400, 160).unwrap();
        write_feature_dump(&path, &fm, &MfccConfig::default(), false).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_feature_dump(&path),
            Err(Error::Format { .. })
        ));
    }
}
