use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfccConfig {
    pub n_mels: usize,
    pub n_ceps: usize,
    pub fft_size: usize,
    pub preemphasis: f64,
    /// Standard deviation of Gaussian dither added to the waveform; 0 disables.
    pub dither: f64,
    pub dither_seed: u64,
    pub window_ms: f64,
    pub shift_ms: f64,
    pub low_freq: f64,
    /// Upper mel edge in Hz; `None` means Nyquist.
    pub high_freq: Option<f64>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            n_mels: 40,
            n_ceps: 40,
            fft_size: 512,
            preemphasis: 0.97,
            dither: 0.0,
            dither_seed: 0,
            window_ms: 25.0,
            shift_ms: 10.0,
            low_freq: 20.0,
            high_freq: None,
            log_floor: 1e-10,
        }
    }
}

/// Per-utterance cepstral features, `n_frames` rows of `dim` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub utterance_id: String,
    pub n_frames: usize,
    pub dim: usize,
    /// Row-major, frame by frame.
    pub data: Vec<f64>,
    pub sample_rate: u32,
    pub window_samples: usize,
    pub shift_samples: usize,
}

impl FeatureMatrix {
    pub fn new(
        utterance_id: impl Into<String>,
        n_frames: usize,
        dim: usize,
        data: Vec<f64>,
        sample_rate: u32,
        window_samples: usize,
        shift_samples: usize,
    ) -> Result<Self> {
        if data.len() != n_frames * dim {
            return Err(Error::Shape(format!(
                "feature data has {} values, expected {n_frames}x{dim}",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            utterance_id: utterance_id.into(),
            n_frames,
            dim,
            data,
            sample_rate,
            window_samples,
            shift_samples,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frame_shift_ms(&self) -> f64 {
        1000.0 * self.shift_samples as f64 / f64::from(self.sample_rate)
    }

    pub fn window_ms(&self) -> f64 {
        1000.0 * self.window_samples as f64 / f64::from(self.sample_rate)
    }

    /// Sample index at the centre of frame `t` (fractional `t` allowed).
    pub fn center_sample(&self, t: f64) -> usize {
        (t * self.shift_samples as f64 + self.window_samples as f64 / 2.0).floor() as usize
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for t in 0..self.n_frames {
            for (acc, v) in m.iter_mut().zip(self.frame(t)) {
                *acc += v;
            }
        }
        let n = self.n_frames.max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Frame count for `n_samples` at the given window and shift, `None` when the
/// signal is shorter than one window.
pub fn frame_count(n_samples: usize, window: usize, shift: usize) -> Option<usize> {
    (n_samples >= window).then(|| 1 + (n_samples - window) / shift)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided power spectrum, row per filter.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: f64,
    low: f64,
    high: f64,
) -> Vec<Vec<f64>> {
    let n_bins = fft_size / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(low), hz_to_mel(high));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / fft_size as f64;
                    if f > left && f < centre {
                        (f - left) / (centre - left)
                    } else if f >= centre && f < right {
                        (right - f) / (right - centre)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows of length `n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            (0..n_in)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / n).cos())
                .collect()
        })
        .collect()
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// MFCC extractor with precomputed filterbank, DCT basis and FFT plan.
pub struct MfccExtractor {
    config: MfccConfig,
    sample_rate: u32,
    window_samples: usize,
    shift_samples: usize,
    window: Vec<f64>,
    filterbank: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        let sr = f64::from(sample_rate);
        let window_samples = (config.window_ms * sr / 1000.0).round() as usize;
        let shift_samples = (config.shift_ms * sr / 1000.0).round() as usize;
        let high = config.high_freq.unwrap_or(sr / 2.0);
        if window_samples == 0 || shift_samples == 0 {
            return Err(Error::Config(
                "window and shift must span at least one sample".into(),
            ));
        }
        if config.fft_size < window_samples {
            return Err(Error::Config(format!(
                "fft size {} smaller than window {window_samples}",
                config.fft_size
            )));
        }
        if config.n_ceps > config.n_mels || config.n_mels == 0 {
            return Err(Error::Config("need 0 < n_ceps <= n_mels".into()));
        }
        if !(config.low_freq >= 0.0 && config.low_freq < high && high <= sr / 2.0) {
            return Err(Error::Config(format!(
                "mel range {}..{high} Hz invalid for {sample_rate} Hz audio",
                config.low_freq
            )));
        }
        let filterbank = mel_filterbank(config.n_mels, config.fft_size, sr, config.low_freq, high);
        let dct = dct_matrix(config.n_ceps, config.n_mels);
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        Ok(MfccExtractor {
            window: hamming(window_samples),
            config,
            sample_rate,
            window_samples,
            shift_samples,
            filterbank,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn window_samples(&self) -> usize {
        self.window_samples
    }

    pub fn shift_samples(&self) -> usize {
        self.shift_samples
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filterbank
    }

    pub fn dct(&self) -> &[Vec<f64>] {
        &self.dct
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Log mel energies → cepstra. Shared by the FFT path and test oracles.
    pub fn cepstra_from_power(&self, power: &[f64]) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .filterbank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(power).map(|(w, p)| w * p).sum();
                e.max(self.config.log_floor).ln()
            })
            .collect();
        self.dct
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn compute(&self, utt: &Utterance) -> Result<FeatureMatrix> {
        if utt.sample_rate != self.sample_rate {
            return Err(Error::Config(format!(
                "{}: sample rate {} differs from extractor rate {}",
                utt.id, utt.sample_rate, self.sample_rate
            )));
        }
        let n_frames = frame_count(utt.samples.len(), self.window_samples, self.shift_samples)
            .ok_or(Error::TooShort {
                have: utt.samples.len(),
                need: self.window_samples,
                unit: "samples",
            })?;

        let mut signal = utt.samples.clone();
        if self.config.dither > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.dither_seed);
            for x in signal.iter_mut() {
                let d: f64 = StandardNormal.sample(&mut rng);
                *x += self.config.dither * d;
            }
        }
        let a = self.config.preemphasis;
        for i in (1..signal.len()).rev() {
            signal[i] -= a * signal[i - 1];
        }

        let n_fft = self.config.fft_size;
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let mut data = Vec::with_capacity(n_frames * self.config.n_ceps);
        for t in 0..n_frames {
            let start = t * self.shift_samples;
            let frame = &signal[start..start + self.window_samples];
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = match frame.get(i) {
                    Some(x) => Complex::new(x * self.window[i], 0.0),
                    None => Complex::new(0.0, 0.0),
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            data.extend(self.cepstra_from_power(&power));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{}: MFCC value {bad}", utt.id)));
        }
        FeatureMatrix::new(
            utt.id.clone(),
            n_frames,
            self.config.n_ceps,
            data,
            self.sample_rate,
            self.window_samples,
            self.shift_samples,
        )
    }
}

pub fn compute_mfcc(utt: &Utterance, config: &MfccConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(config.clone(), utt.sample_rate)?.compute(utt)
}

/// Per-utterance cepstral mean normalisation.
pub fn cmn(fm: &FeatureMatrix) -> FeatureMatrix {
    let means = fm.means();
    let mut out = fm.clone();
    for row in out.data.chunks_mut(fm.dim) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}
