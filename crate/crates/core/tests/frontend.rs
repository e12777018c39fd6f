//! MFCC pipeline against an O(N^2) DFT reference, plus frame-count and CMN
//! properties.

use std::f64::consts::PI;

use proptest::prelude::*;
use spkemb::corpus::{synthesize, SynthConfig, Utterance};
use spkemb::frontend::{cmn, compute_mfcc, frame_count, FeatureMatrix, MfccConfig, MfccExtractor};

/// Reference MFCCs: its own pre-emphasis, framing, windowing and a naive DFT;
/// only the mel matrix and the DCT basis are shared with the extractor.
fn naive_mfcc(utt: &Utterance, cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let ex = MfccExtractor::new(cfg.clone(), utt.sample_rate).unwrap();
    let win = 400;
    let shift = 160;
    let n = cfg.fft_size;
    let x = &utt.samples;
    let emph: Vec<f64> = (0..x.len())
        .map(|i| {
            if i == 0 {
                x[0]
            } else {
                x[i] - cfg.preemphasis * x[i - 1]
            }
        })
        .collect();
    let window: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1) as f64).cos())
        .collect();
    let cos_table: Vec<f64> = (0..n)
        .map(|m| (2.0 * PI * m as f64 / n as f64).cos())
        .collect();
    let sin_table: Vec<f64> = (0..n)
        .map(|m| (2.0 * PI * m as f64 / n as f64).sin())
        .collect();
    let frames = 1 + (x.len() - win) / shift;
    (0..frames)
        .map(|t| {
            let seg: Vec<f64> = (0..win).map(|i| emph[t * shift + i] * window[i]).collect();
            let power: Vec<f64> = (0..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (i, v) in seg.iter().enumerate() {
                        let idx = (k * i) % n;
                        re += v * cos_table[idx];
                        im -= v * sin_table[idx];
                    }
                    re * re + im * im
                })
                .collect();
            let log_mel: Vec<f64> = ex
                .filterbank()
                .iter()
                .map(|f| {
                    f.iter()
                        .zip(&power)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
                        .max(cfg.log_floor)
                        .ln()
                })
                .collect();
            ex.dct()
                .iter()
                .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

#[test]
fn fft_path_matches_naive_dft() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 5,
        utts_per_speaker: 1,
        phones_per_utt: 6,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = MfccConfig::default();
    for utt in corpus.utterances() {
        let fm = compute_mfcc(utt, &cfg).unwrap();
        let reference = naive_mfcc(utt, &cfg);
        assert_eq!(reference.len(), fm.n_frames);
        let mut worst = 0.0f64;
        for (t, row) in reference.iter().enumerate() {
            for (a, b) in fm.frame(t).iter().zip(row) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-8, "{}: max abs diff {worst:e}", utt.id);
    }
}

#[test]
fn cmn_output_means_vanish() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 2,
        utts_per_speaker: 1,
        phones_per_utt: 6,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let fm = cmn(&compute_mfcc(&corpus.utterances()[0], &MfccConfig::default()).unwrap());
    let t = fm.n_frames as f64;
    for c in 0..fm.dim {
        let mean: f64 = (0..fm.n_frames).map(|i| fm.frame(i)[c]).sum::<f64>() / t;
        assert!(mean.abs() <= 1e-9, "column {c} mean {mean:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn frame_count_formula(n in 400usize..6000) {
        let samples: Vec<f64> = (0..n).map(|i| ((i % 31) as f64 - 15.0) / 64.0).collect();
        let utt = Utterance::new("u", "s", samples, 16000).unwrap();
        let fm = compute_mfcc(&utt, &MfccConfig::default()).unwrap();
        prop_assert_eq!(fm.n_frames, 1 + (n - 400) / 160);
        prop_assert_eq!(frame_count(n, 400, 160), Some(fm.n_frames));
    }

    #[test]
    fn cmn_is_idempotent(data in proptest::collection::vec(-50.0f64..50.0, 6..120)) {
        let dim = 3;
        let t = data.len() / dim;
        let fm = FeatureMatrix::new("u", t, dim, data[..t * dim].to_vec(), 16000, 400, 160).unwrap();
        let once = cmn(&fm);
        let twice = cmn(&once);
        for (a, b) in once.data.iter().zip(&twice.data) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
