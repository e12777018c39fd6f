//! Seeded source-filter synthesis of a small labelled corpus.
//!
//! Every speaker gets a random voice: fundamental frequency, a formant
//! frequency warp, bandwidth scaling, glottal tilt and an extra envelope
//! resonance. Every phone is rendered from a class template (voiced formant
//! pattern, frication band, closure, burst, ...), so broad-class structure is
//! recoverable from the audio by construction. Segment boundaries are written
//! exactly where the generator switched templates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::phn::{PhoneAlignment, PhoneSegment};
use super::phones::BroadClass;
use super::wav::{dequantize, quantize};
use super::{Corpus, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub phones_per_utt: usize,
    pub sample_rate: u32,
    pub seed: u64,
    /// When set, only this phone carries speaker-dependent rendering; all
    /// other phones use a fixed neutral voice.
    #[serde(default)]
    pub critical_phone: Option<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_speakers: 20,
            utts_per_speaker: 10,
            phones_per_utt: 24,
            sample_rate: 16000,
            seed: 0,
            critical_phone: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::Config(
                "synthetic corpus needs at least 2 speakers".into(),
            ));
        }
        if self.utts_per_speaker == 0 || self.phones_per_utt == 0 {
            return Err(Error::Config(
                "utts_per_speaker and phones_per_utt must be positive".into(),
            ));
        }
        if self.sample_rate < 8000 {
            return Err(Error::Config("sample rate must be at least 8 kHz".into()));
        }
        if let Some(p) = &self.critical_phone {
            if template(p).is_none() {
                return Err(Error::Config(format!(
                    "critical phone '{p}' is not synthesizable"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Excitation {
    Voiced,
    Noise,
    /// Voicing plus frication.
    Mixed,
    /// Low-level voice bar.
    VoiceBar,
    Silence,
    /// Closure followed by a decaying noise burst.
    Burst {
        voiced: bool,
    },
    /// Closure followed by frication.
    Affricate {
        voiced: bool,
    },
}

#[derive(Debug, Clone, Copy)]
struct Template {
    excitation: Excitation,
    /// (centre Hz, bandwidth Hz, linear gain)
    formants: [(f64, f64, f64); 3],
    level: f64,
    duration_ms: (f64, f64),
}

const fn t(
    excitation: Excitation,
    formants: [(f64, f64, f64); 3],
    level: f64,
    duration_ms: (f64, f64),
) -> Template {
    Template {
        excitation,
        formants,
        level,
        duration_ms,
    }
}

const VOWEL_DUR: (f64, f64) = (80.0, 160.0);
const CONS_DUR: (f64, f64) = (50.0, 100.0);

fn vowel(f1: f64, f2: f64, f3: f64) -> Template {
    t(
        Excitation::Voiced,
        [(f1, 80.0, 1.0), (f2, 100.0, 0.6), (f3, 140.0, 0.3)],
        1.0,
        VOWEL_DUR,
    )
}

fn template(phone: &str) -> Option<Template> {
    use Excitation::*;
    let tp = match phone {
        "iy" => vowel(270.0, 2290.0, 3010.0),
        "ih" => vowel(390.0, 1990.0, 2550.0),
        "eh" => vowel(530.0, 1840.0, 2480.0),
        "ey" => vowel(480.0, 2100.0, 2700.0),
        "ae" => vowel(660.0, 1720.0, 2410.0),
        "aa" => vowel(730.0, 1090.0, 2440.0),
        "ah" => vowel(520.0, 1190.0, 2390.0),
        "ao" => vowel(570.0, 840.0, 2410.0),
        "ow" => vowel(450.0, 900.0, 2300.0),
        "uh" => vowel(440.0, 1020.0, 2240.0),
        "uw" => vowel(300.0, 870.0, 2240.0),
        "er" => vowel(490.0, 1350.0, 1690.0),
        "m" => t(
            Voiced,
            [
                (250.0, 60.0, 1.0),
                (1000.0, 200.0, 0.15),
                (2200.0, 250.0, 0.1),
            ],
            0.5,
            CONS_DUR,
        ),
        "n" => t(
            Voiced,
            [
                (250.0, 60.0, 1.0),
                (1700.0, 200.0, 0.15),
                (2600.0, 250.0, 0.1),
            ],
            0.5,
            CONS_DUR,
        ),
        "ng" => t(
            Voiced,
            [
                (250.0, 60.0, 1.0),
                (2300.0, 200.0, 0.15),
                (2750.0, 250.0, 0.1),
            ],
            0.5,
            CONS_DUR,
        ),
        "l" => t(
            Voiced,
            [
                (360.0, 80.0, 1.0),
                (1300.0, 120.0, 0.4),
                (2700.0, 150.0, 0.2),
            ],
            0.7,
            CONS_DUR,
        ),
        "r" => t(
            Voiced,
            [
                (420.0, 80.0, 1.0),
                (1300.0, 120.0, 0.5),
                (1600.0, 150.0, 0.4),
            ],
            0.7,
            CONS_DUR,
        ),
        "w" => t(
            Voiced,
            [(300.0, 70.0, 1.0), (610.0, 90.0, 0.5), (2200.0, 150.0, 0.1)],
            0.7,
            CONS_DUR,
        ),
        "y" => t(
            Voiced,
            [
                (260.0, 70.0, 1.0),
                (2070.0, 120.0, 0.5),
                (3020.0, 150.0, 0.3),
            ],
            0.7,
            CONS_DUR,
        ),
        "hh" => t(
            Noise,
            [
                (500.0, 300.0, 0.6),
                (1500.0, 300.0, 0.5),
                (2500.0, 300.0, 0.4),
            ],
            0.25,
            CONS_DUR,
        ),
        "s" => t(
            Noise,
            [
                (5500.0, 1200.0, 1.0),
                (6800.0, 1000.0, 0.6),
                (4500.0, 800.0, 0.3),
            ],
            0.35,
            CONS_DUR,
        ),
        "sh" => t(
            Noise,
            [
                (2800.0, 600.0, 1.0),
                (4000.0, 900.0, 0.7),
                (5500.0, 900.0, 0.3),
            ],
            0.35,
            CONS_DUR,
        ),
        "f" => t(
            Noise,
            [
                (1800.0, 2500.0, 0.5),
                (4500.0, 2500.0, 0.5),
                (6500.0, 2000.0, 0.5),
            ],
            0.12,
            CONS_DUR,
        ),
        "th" => t(
            Noise,
            [
                (1500.0, 2500.0, 0.4),
                (5000.0, 2500.0, 0.5),
                (7000.0, 2000.0, 0.4),
            ],
            0.1,
            CONS_DUR,
        ),
        "z" => t(
            Mixed,
            [
                (5500.0, 1200.0, 1.0),
                (6800.0, 1000.0, 0.6),
                (250.0, 100.0, 0.4),
            ],
            0.3,
            CONS_DUR,
        ),
        "v" => t(
            Mixed,
            [
                (1800.0, 2500.0, 0.5),
                (4500.0, 2500.0, 0.5),
                (250.0, 100.0, 0.5),
            ],
            0.15,
            CONS_DUR,
        ),
        "dh" => t(
            Mixed,
            [
                (1500.0, 2500.0, 0.4),
                (5000.0, 2500.0, 0.4),
                (250.0, 100.0, 0.5),
            ],
            0.12,
            CONS_DUR,
        ),
        "jh" => t(
            Affricate { voiced: true },
            [
                (3000.0, 700.0, 1.0),
                (4200.0, 900.0, 0.6),
                (250.0, 100.0, 0.3),
            ],
            0.3,
            (60.0, 110.0),
        ),
        "ch" => t(
            Affricate { voiced: false },
            [
                (3000.0, 700.0, 1.0),
                (4200.0, 900.0, 0.6),
                (5500.0, 900.0, 0.3),
            ],
            0.3,
            (60.0, 110.0),
        ),
        "b" => t(
            Burst { voiced: true },
            [
                (800.0, 600.0, 1.0),
                (1500.0, 800.0, 0.3),
                (250.0, 100.0, 0.3),
            ],
            0.3,
            (45.0, 80.0),
        ),
        "d" => t(
            Burst { voiced: true },
            [
                (4000.0, 1200.0, 1.0),
                (2500.0, 800.0, 0.4),
                (250.0, 100.0, 0.3),
            ],
            0.3,
            (45.0, 80.0),
        ),
        "g" => t(
            Burst { voiced: true },
            [
                (2000.0, 500.0, 1.0),
                (3000.0, 700.0, 0.4),
                (250.0, 100.0, 0.3),
            ],
            0.3,
            (45.0, 80.0),
        ),
        "p" => t(
            Burst { voiced: false },
            [
                (800.0, 600.0, 1.0),
                (1500.0, 800.0, 0.3),
                (3500.0, 1000.0, 0.2),
            ],
            0.35,
            (45.0, 80.0),
        ),
        "t" => t(
            Burst { voiced: false },
            [
                (4000.0, 1200.0, 1.0),
                (2500.0, 800.0, 0.4),
                (6000.0, 1500.0, 0.3),
            ],
            0.35,
            (45.0, 80.0),
        ),
        "k" => t(
            Burst { voiced: false },
            [
                (2000.0, 500.0, 1.0),
                (3000.0, 700.0, 0.4),
                (4500.0, 1000.0, 0.2),
            ],
            0.35,
            (45.0, 80.0),
        ),
        "bcl" | "dcl" | "gcl" => t(
            VoiceBar,
            [
                (200.0, 80.0, 1.0),
                (500.0, 200.0, 0.2),
                (900.0, 300.0, 0.05),
            ],
            0.05,
            (40.0, 70.0),
        ),
        "pcl" | "tcl" | "kcl" => t(Silence, [(0.0, 0.0, 0.0); 3], 0.0, (40.0, 70.0)),
        "h#" => t(Silence, [(0.0, 0.0, 0.0); 3], 0.0, (100.0, 200.0)),
        _ => return None,
    };
    Some(tp)
}

/// Phones the generator samples from, per broad class.
fn inventory(class: BroadClass) -> &'static [&'static str] {
    match class {
        BroadClass::Affricate => &["jh", "ch"],
        BroadClass::Closures => &["bcl", "dcl", "gcl", "pcl", "tcl", "kcl"],
        BroadClass::Fricative => &["s", "sh", "z", "f", "th", "v", "dh"],
        BroadClass::Nasals => &["m", "n", "ng"],
        BroadClass::SemivowelsGlides => &["l", "r", "w", "y", "hh"],
        BroadClass::Vowels => &[
            "iy", "ih", "eh", "ey", "ae", "aa", "ah", "ao", "ow", "uh", "uw", "er",
        ],
        BroadClass::Stops => &["b", "d", "g", "p", "t", "k"],
        BroadClass::Others => &["h#"],
    }
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    f0: f64,
    warp: f64,
    bandwidth_scale: f64,
    formant_gain: [f64; 3],
    /// One-pole low-pass coefficient on the glottal pulse train.
    tilt: f64,
    envelope_freq: f64,
    envelope_gain: f64,
}

impl Voice {
    const NEUTRAL: Voice = Voice {
        f0: 150.0,
        warp: 1.0,
        bandwidth_scale: 1.0,
        formant_gain: [1.0; 3],
        tilt: 0.8,
        envelope_freq: 3500.0,
        envelope_gain: 0.0,
    };

    fn random(rng: &mut ChaCha8Rng) -> Voice {
        Voice {
            f0: rng.random_range(85.0..255.0),
            warp: rng.random_range(0.82..1.18),
            bandwidth_scale: rng.random_range(0.7..1.4),
            formant_gain: [
                rng.random_range(0.6..1.6),
                rng.random_range(0.6..1.6),
                rng.random_range(0.6..1.6),
            ],
            tilt: rng.random_range(0.5..0.95),
            envelope_freq: rng.random_range(2500.0..4500.0),
            envelope_gain: rng.random_range(0.0..0.5),
        }
    }
}

/// Two-pole resonator with unit peak gain.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, sample_rate: f64) -> Resonator {
        let nyq = sample_rate / 2.0;
        let freq = freq.clamp(50.0, nyq - 100.0);
        let r = (-PI * bandwidth.max(20.0) / sample_rate).exp();
        let theta = 2.0 * PI * freq / sample_rate;
        Resonator {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt(),
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Renderer<'a> {
    rng: &'a mut ChaCha8Rng,
    sample_rate: f64,
    /// Glottal phase carried across segments, in cycles.
    phase: f64,
    tilt_state: f64,
}

impl Renderer<'_> {
    fn noise(&mut self) -> f64 {
        self.rng.sample::<f64, _>(StandardNormal)
    }

    fn glottal(&mut self, f0: f64, tilt: f64) -> f64 {
        self.phase += f0 / self.sample_rate;
        let pulse = if self.phase >= 1.0 {
            self.phase -= 1.0;
            1.0
        } else {
            0.0
        };
        self.tilt_state = tilt * self.tilt_state + (1.0 - tilt) * pulse;
        self.tilt_state * 20.0
    }

    fn render(&mut self, tp: &Template, voice: &Voice, n: usize) -> Vec<f64> {
        let sr = self.sample_rate;
        let jitter = 1.0 + 0.03 * self.noise().clamp(-2.0, 2.0);
        let f0 = voice.f0 * (1.0 + 0.04 * self.noise().clamp(-2.0, 2.0));
        let mut bank: Vec<(Resonator, f64)> = tp
            .formants
            .iter()
            .zip(voice.formant_gain)
            .filter(|((_, _, g), _)| *g > 0.0)
            .map(|(&(f, bw, g), vg)| {
                (
                    Resonator::new(f * voice.warp * jitter, bw * voice.bandwidth_scale, sr),
                    g * vg,
                )
            })
            .collect();
        let mut envelope = Resonator::new(voice.envelope_freq, 400.0, sr);
        let mut voicebar = Resonator::new(200.0 * voice.warp, 80.0, sr);

        let closure_len = match tp.excitation {
            Excitation::Burst { .. } => (n as f64 * 0.6) as usize,
            Excitation::Affricate { .. } => (n as f64 * 0.3) as usize,
            _ => 0,
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let source = match tp.excitation {
                Excitation::Voiced => (self.glottal(f0, voice.tilt), 0.0),
                Excitation::Noise => (0.0, self.noise()),
                Excitation::Mixed => (0.5 * self.glottal(f0, voice.tilt), self.noise()),
                Excitation::VoiceBar => (self.glottal(f0, voice.tilt), 0.0),
                Excitation::Silence => (0.0, 0.0),
                Excitation::Burst { voiced } | Excitation::Affricate { voiced } => {
                    let g = self.glottal(f0, voice.tilt);
                    if i < closure_len {
                        (if voiced { 0.05 * g } else { 0.0 }, 0.0)
                    } else {
                        let decay = match tp.excitation {
                            Excitation::Burst { .. } => {
                                (-((i - closure_len) as f64) / (0.012 * sr)).exp()
                            }
                            _ => 1.0,
                        };
                        (if voiced { 0.3 * g } else { 0.0 }, decay * self.noise())
                    }
                }
            };
            let excitation = source.0 + source.1;
            let mut y: f64 = bank.iter_mut().map(|(r, g)| *g * r.tick(excitation)).sum();
            if let Excitation::VoiceBar = tp.excitation {
                y = voicebar.tick(source.0);
            }
            if voice.envelope_gain > 0.0 && source.0 != 0.0 {
                y += voice.envelope_gain * envelope.tick(source.0);
            } else {
                envelope.tick(0.0);
            }
            out.push(tp.level * y);
        }
        // 2 ms raised-cosine fades keep segment joins from clicking.
        let fade = ((0.002 * sr) as usize).min(n / 2);
        for i in 0..fade {
            let w = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
            out[i] *= w;
            out[n - 1 - i] *= w;
        }
        out
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index:03}")
}

pub fn utterance_id(speaker: usize, utt: usize) -> String {
    format!("spk{speaker:03}_u{utt:02}")
}

fn synthesize_utterance(
    config: &SynthConfig,
    voice: &Voice,
    speaker: usize,
    utt: usize,
) -> Result<(Utterance, PhoneAlignment)> {
    let mut rng = stream_rng(config.seed, 1 + (speaker as u64) * 1000 + utt as u64);
    let sr = f64::from(config.sample_rate);

    let mut schedule: Vec<&'static str> = Vec::with_capacity(config.phones_per_utt + 2);
    schedule.push("h#");
    let interior: Vec<BroadClass> = BroadClass::ALL
        .into_iter()
        .filter(|c| *c != BroadClass::Others)
        .collect();
    for _ in 0..config.phones_per_utt {
        let class = interior[rng.random_range(0..interior.len())];
        let phones = inventory(class);
        schedule.push(phones[rng.random_range(0..phones.len())]);
    }
    schedule.push("h#");

    // Per-utterance voice drift.
    let mut utt_voice = *voice;
    utt_voice.f0 *= 1.0 + rng.random_range(-0.06..0.06);
    let neutral = Voice::NEUTRAL;

    let mut samples = Vec::new();
    let mut segments = Vec::with_capacity(schedule.len());
    let mut phase_rng = stream_rng(
        config.seed ^ 0x5eed,
        1 + (speaker as u64) * 1000 + utt as u64,
    );
    let mut renderer = Renderer {
        rng: &mut phase_rng,
        sample_rate: sr,
        phase: 0.0,
        tilt_state: 0.0,
    };
    for phone in schedule {
        let tp = template(phone).expect("inventory phones have templates");
        let ms = rng.random_range(tp.duration_ms.0..tp.duration_ms.1);
        let n = ((ms / 1000.0) * sr).round().max(1.0) as usize;
        let v = match &config.critical_phone {
            Some(critical) if critical != phone => &neutral,
            _ => &utt_voice,
        };
        let start = samples.len();
        samples.extend(renderer.render(&tp, v, n));
        segments.push(PhoneSegment::new(start, start + n, phone));
    }

    // Background noise 40 dB below the speech level.
    let rms = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len().max(1) as f64).sqrt();
    let floor = 0.01 * rms;
    for x in samples.iter_mut() {
        *x += floor * renderer.noise();
    }
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { 0.8 / peak } else { 1.0 };
    let samples: Vec<f64> = samples
        .iter()
        .map(|x| dequantize(quantize(x * scale)))
        .collect();

    let id = utterance_id(speaker, utt);
    let alignment = PhoneAlignment::new(id.clone(), segments)?;
    let utterance = Utterance::new(id, speaker_id(speaker), samples, config.sample_rate)?;
    Ok((utterance, alignment))
}

/// Generates the corpus in memory. Samples are already on the 16-bit grid, so
/// writing and reloading reproduces them exactly.
pub fn synthesize(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut voice_rng = stream_rng(config.seed, 0);
    let voices: Vec<Voice> = (0..config.n_speakers)
        .map(|_| Voice::random(&mut voice_rng))
        .collect();
    let mut utterances = Vec::new();
    let mut alignments = BTreeMap::new();
    for (s, voice) in voices.iter().enumerate() {
        for u in 0..config.utts_per_speaker {
            let (utt, alignment) = synthesize_utterance(config, voice, s, u)?;
            alignments.insert(utt.id.clone(), alignment);
            utterances.push(utt);
        }
    }
    Corpus::new(utterances, alignments)
}

/// Generates the corpus and writes wav, `.PHN` and manifest files under `root`.
pub fn synth_corpus(config: &SynthConfig, root: &Path) -> Result<Corpus> {
    let corpus = synthesize(config)?;
    corpus.write(root)?;
    Ok(corpus)
}
