//! Network-level properties: whole-net gradients, the pooling relocation
//! identity, frame timing, checkpoints and short training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spkemb::corpus::{synthesize, SynthConfig};
use spkemb::frontend::{FeatureMatrix, MfccConfig};
use spkemb::model::*;
use spkemb::nn::gradcheck::{max_relative_error, numeric_gradient};
use spkemb::nn::Tensor;
use spkemb::Error;

fn random_features(n: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 40).map(|_| rng.random_range(-3.0..3.0)).collect();
    FeatureMatrix::new(format!("r{seed}"), n, 40, data, 16000, 400, 160).unwrap()
}

fn tiny(pooling: Pooling, relu_before_fc2: bool) -> SpeakerNetConfig {
    SpeakerNetConfig {
        input_dim: 40,
        conv_channels: vec![3, 4, 3, 5],
        fc1: 4,
        embedding: 3,
        n_speakers: 3,
        crop_frames: 20,
        ..SpeakerNetConfig::desk(3)
    }
    .with_pooling(pooling)
    .with_relu_before_fc2(relu_before_fc2)
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    diff / scale
}

#[test]
fn whole_network_gradients() {
    for (pooling, relu_first) in [
        (Pooling::Statistics, false),
        (Pooling::Average, false),
        (Pooling::Average, true),
    ] {
        for seed in 0..4 {
            let mut net = SpeakerNet::build(tiny(pooling, relu_first), seed).unwrap();
            // non-zero biases keep pre-activations off the ReLU kink
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in net
                .params_mut()
                .into_iter()
                .filter(|p| p.shape().len() == 1)
            {
                p.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(0.1..0.5));
            }
            // the softmax weights start at zero, which would hide every
            // gradient below them
            let n = net.params_mut().len();
            net.params_mut()[n - 2]
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.5..0.5));
            let fm = random_features(15, 100 + seed);
            let x = feature_window(&fm, 0, 15).unwrap();
            let label = (seed % 3) as usize;
            let (_, _, grads) = net.loss_and_gradients(x.clone(), label).unwrap();
            for (k, g) in grads.iter().enumerate() {
                let base = net.clone();
                let numeric = numeric_gradient(
                    |v| {
                        let mut n = base.clone();
                        let p = &mut n.params_mut()[k];
                        **p = Tensor::new(p.shape().to_vec(), v.to_vec()).unwrap();
                        n.loss_and_gradients(x.clone(), label).unwrap().0
                    },
                    net.params()[k].data(),
                    1e-5,
                );
                let err = max_relative_error(g.data(), &numeric, 1e-6);
                assert!(
                    err <= 1e-4,
                    "{pooling:?}/{relu_first} seed {seed} {}: {err:e}",
                    net.param_names()[k]
                );
            }
        }
    }
}

#[test]
fn pooling_relocation_identity() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let net = SpeakerNet::build(
            SpeakerNetConfig::desk(10).with_pooling(Pooling::Average),
            seed,
        )
        .unwrap();
        let fm = random_features(40 + seed as usize, seed);
        let pooled = net.extract_embedding(&fm, Tap::Fc2).unwrap();
        let frames = net.frame_mode_forward(&fm).unwrap();
        worst = worst.max(rel_dev(&pooled, &frames[5].mean()));
        // fc1 commutes with the mean as well
        let fc1 = net.extract_embedding(&fm, Tap::Fc1).unwrap();
        worst = worst.max(rel_dev(&fc1, &frames[4].mean()));
    }
    assert!(worst <= 1e-9, "relative deviation {worst:e}");
}

#[test]
fn relu_between_fc_layers_breaks_relocation() {
    let net = SpeakerNet::build(
        SpeakerNetConfig::desk(10)
            .with_pooling(Pooling::Average)
            .with_relu_before_fc2(true),
        3,
    )
    .unwrap();
    let fm = random_features(60, 9);
    let frames = net.frame_mode_forward(&fm).unwrap();
    // fc1 outputs change sign across frames, which is what the ReLU cuts
    let fc1 = &frames[4].vectors;
    let mixed = (0..fc1[0].len())
        .filter(|&i| fc1.iter().any(|v| v[i] > 0.0) && fc1.iter().any(|v| v[i] < 0.0))
        .count();
    assert!(mixed > 0);
    let pooled = net.extract_embedding(&fm, Tap::Fc2).unwrap();
    let dev = rel_dev(&pooled, &frames[5].mean());
    assert!(dev > 1e-3, "deviation only {dev:e}");
}

#[test]
fn frame_shift_moves_layer_one() {
    let net =
        SpeakerNet::build(SpeakerNetConfig::desk(4).with_pooling(Pooling::Average), 1).unwrap();
    let fm = random_features(41, 4);
    let shifted = FeatureMatrix::new(
        "shifted",
        40,
        40,
        fm.data[40..].to_vec(),
        fm.sample_rate,
        fm.window_samples,
        fm.shift_samples,
    )
    .unwrap();
    let a = net.frame_mode_forward(&fm).unwrap();
    let b = net.frame_mode_forward(&shifted).unwrap();
    assert_eq!(a[0].len(), b[0].len() + 1);
    for j in 0..b[0].len() {
        assert_eq!(a[0].vectors[j + 1], b[0].vectors[j]);
    }
    assert_eq!(a[0].center_samples[1] - a[0].center_samples[0], 160);
    assert_eq!(a[1].center_samples[1] - a[1].center_samples[0], 320);
}

#[test]
fn repeated_periodic_input_keeps_average_embedding() {
    // period-2 input: every stride-2 window sees the same phase
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let period: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let make = |n: usize| {
        let data = (0..n).flat_map(|t| period[t % 2].clone()).collect();
        FeatureMatrix::new("p", n, 40, data, 16000, 400, 160).unwrap()
    };
    let net =
        SpeakerNet::build(SpeakerNetConfig::desk(4).with_pooling(Pooling::Average), 2).unwrap();
    let a = net.extract_embedding(&make(40), Tap::Fc2).unwrap();
    let b = net.extract_embedding(&make(80), Tap::Fc2).unwrap();
    assert!(rel_dev(&a, &b) <= 1e-9);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = SpeakerNet::build(SpeakerNetConfig::desk(6), 11).unwrap();
    let meta = CheckpointMeta {
        config: net.config().clone(),
        epoch: 3,
        speakers: (0..6).map(|i| format!("s{i}")).collect(),
    };
    net.save(&path, &meta, 42, 0.001).unwrap();
    let loaded = SpeakerNet::load(&path).unwrap();
    assert_eq!(loaded.meta, meta);
    assert_eq!(loaded.update_count, 42);
    let fm = random_features(50, 1);
    let a = net.forward_segment(&fm).unwrap();
    let b = loaded.net.forward_segment(&fm).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.logits), bits(&b.logits));
    assert_eq!(bits(&a.fc2_tap), bits(&b.fc2_tap));
}

#[test]
fn extraction_is_deterministic() {
    let net = SpeakerNet::build(SpeakerNetConfig::desk(4), 0).unwrap();
    let fm = random_features(30, 2);
    assert_eq!(
        net.extract_embedding(&fm, Tap::Fc2).unwrap(),
        net.extract_embedding(&fm, Tap::Fc2).unwrap()
    );
    assert_eq!(net.extract_embedding(&fm, Tap::Fc2).unwrap().len(), 32);
    assert_eq!(net.extract_embedding(&fm, Tap::Fc1).unwrap().len(), 96);
}

#[test]
fn zero_epochs_returns_initial_checkpoint() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 2,
        utts_per_speaker: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let set = build_training_set(&corpus, &MfccConfig::default(), None, 0).unwrap();
    let net = SpeakerNet::build(SpeakerNetConfig::desk(2), 0).unwrap();
    let hyper = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(net.clone(), &set.examples, &hyper).unwrap();
    assert_eq!(out.checkpoints.len(), 1);
    assert_eq!(out.checkpoints[0].epoch, 0);
    assert_eq!(out.checkpoints[0].net, net);
    assert!(out.log.is_empty());
}

#[test]
fn single_speaker_is_rejected() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 2,
        utts_per_speaker: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let corpus = corpus
        .subset(&["spk000_u00".to_string(), "spk000_u01".to_string()])
        .unwrap();
    assert!(matches!(
        build_training_set(&corpus, &MfccConfig::default(), None, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn epoch_loss_decreases_on_synthetic_corpus() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 20,
        utts_per_speaker: 10,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let set = build_training_set(&corpus, &MfccConfig::default(), None, 0).unwrap();
    let net = SpeakerNet::build(SpeakerNetConfig::desk(20), 0).unwrap();
    let hyper = TrainConfig {
        epochs: 3,
        ..TrainConfig::desk()
    };
    let out = train(net, &set.examples, &hyper).unwrap();
    assert_eq!(out.epoch_loss.len(), 3);
    assert!(
        out.epoch_loss.windows(2).all(|w| w[1] < w[0]),
        "epoch losses {:?}",
        out.epoch_loss
    );
    assert_eq!(out.log.len(), 3 * set.examples.len());
}

#[test]
fn two_speakers_are_learned() {
    let corpus = synthesize(&SynthConfig {
        n_speakers: 2,
        utts_per_speaker: 50,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let set = build_training_set(&corpus, &MfccConfig::default(), None, 0).unwrap();
    assert_eq!(set.examples.len(), 100);
    let net = SpeakerNet::build(SpeakerNetConfig::desk(2), 0).unwrap();
    let hyper = TrainConfig {
        epochs: 5,
        ..TrainConfig::desk()
    };
    let out = train(net, &set.examples, &hyper).unwrap();
    let acc = *out.epoch_accuracy.last().unwrap();
    assert!(
        acc > 0.95,
        "final training accuracy {acc}, per epoch {:?}",
        out.epoch_accuracy
    );
}
