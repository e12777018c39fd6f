//! Additive-noise augmentation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    /// Sum of other utterances from the corpus.
    Babble,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Returns a copy of `utt` with noise mixed in at `snr_db`. `babble_pool`
/// supplies the talkers for [`NoiseKind::Babble`]; it is ignored otherwise.
/// The result is clipped to [-1, 1] and gets the id suffix `-aug`.
pub fn add_noise<R: Rng>(
    utt: &Utterance,
    kind: NoiseKind,
    snr_db: f64,
    babble_pool: &[&Utterance],
    rng: &mut R,
) -> Result<Utterance> {
    let n = utt.samples.len();
    let noise: Vec<f64> = match kind {
        NoiseKind::White => (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseKind::Babble => {
            let talkers: Vec<&&Utterance> = babble_pool.iter().filter(|u| u.id != utt.id).collect();
            if talkers.is_empty() {
                return Err(Error::Config("babble noise needs other utterances".into()));
            }
            let k = talkers.len().min(3);
            let mut acc = vec![0.0; n];
            for _ in 0..k {
                let other = talkers[rng.random_range(0..talkers.len())];
                let offset = rng.random_range(0..other.samples.len());
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += other.samples[(offset + i) % other.samples.len()];
                }
            }
            acc
        }
    };
    let signal_power = power(&utt.samples);
    let noise_power = power(&noise);
    let gain = if noise_power > 0.0 {
        (signal_power / noise_power / 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        0.0
    };
    let samples = utt
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, v)| (s + gain * v).clamp(-1.0, 1.0))
        .collect();
    Utterance::new(
        format!("{}-aug", utt.id),
        utt.speaker_id.clone(),
        samples,
        utt.sample_rate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(id: &str) -> Utterance {
        let s = (0..8000).map(|i| 0.5 * (i as f64 * 0.05).sin()).collect();
        Utterance::new(id, "s", s, 16000).unwrap()
    }

    #[test]
    fn white_noise_hits_requested_snr() {
        let u = sine("a");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = add_noise(&u, NoiseKind::White, 10.0, &[], &mut rng).unwrap();
        let diff: Vec<f64> = noisy
            .samples
            .iter()
            .zip(&u.samples)
            .map(|(a, b)| a - b)
            .collect();
        let snr = 10.0 * (power(&u.samples) / power(&diff)).log10();
        assert!((snr - 10.0).abs() < 0.2, "snr {snr}");
        assert_eq!(noisy.speaker_id, u.speaker_id);
    }

    #[test]
    fn babble_needs_pool() {
        let u = sine("a");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(add_noise(&u, NoiseKind::Babble, 5.0, &[&u], &mut rng).is_err());
        let b = sine("b");
        assert!(add_noise(&u, NoiseKind::Babble, 5.0, &[&u, &b], &mut rng).is_ok());
    }
}
