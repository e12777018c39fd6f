//! Utterances, phone alignments, speaker labels and trial lists.

mod augment;
mod phn;
mod phones;
mod synth;
mod trials;
mod wav;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{add_noise, NoiseKind};
pub use phn::{parse_phn, parse_phn_str, PhoneAlignment, PhoneSegment};
pub use phones::{fold_phone, lookup_broad_class, phone_to_broad_class, BroadClass};
pub use synth::{synth_corpus, synthesize, SynthConfig};
pub use trials::{make_trials, parse_trials, parse_trials_str, Trial, TrialList};
pub use wav::{dequantize, quantize, read_wav, write_wav};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Disjoint training and evaluation utterance ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

impl Split {
    pub fn read(path: &Path) -> Result<Split> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        speaker_id: impl Into<String>,
        samples: Vec<f64>,
        sample_rate: u32,
    ) -> Result<Self> {
        let id = id.into();
        if sample_rate == 0 {
            return Err(Error::Config(format!("{id}: sample rate must be positive")));
        }
        if samples.is_empty() {
            return Err(Error::Config(format!("{id}: no samples")));
        }
        if let Some(bad) = samples.iter().find(|x| x.is_nan() || x.abs() > 1.0) {
            return Err(Error::Config(format!(
                "{id}: amplitude {bad} outside [-1, 1]"
            )));
        }
        Ok(Utterance {
            id,
            speaker_id: speaker_id.into(),
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// One row of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utt_id: String,
    pub wav_path: PathBuf,
    pub phn_path: Option<PathBuf>,
    pub speaker_id: String,
}

/// In-memory corpus. Utterances are kept sorted by id and never mutated
/// after construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    alignments: BTreeMap<String, PhoneAlignment>,
}

impl Corpus {
    pub fn new(
        mut utterances: Vec<Utterance>,
        alignments: BTreeMap<String, PhoneAlignment>,
    ) -> Result<Self> {
        utterances.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in utterances.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Config(format!(
                    "duplicate utterance id {}",
                    pair[0].id
                )));
            }
        }
        let corpus = Corpus {
            utterances,
            alignments,
        };
        for (id, alignment) in &corpus.alignments {
            let utt = corpus
                .utterance(id)
                .ok_or_else(|| Error::Reference(id.clone()))?;
            check_alignment_fits(utt, alignment)?;
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterances in id order.
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn utterance(&self, id: &str) -> Option<&Utterance> {
        self.utterances
            .binary_search_by(|u| u.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn alignment(&self, id: &str) -> Option<&PhoneAlignment> {
        self.alignments.get(id)
    }

    pub fn alignments(&self) -> &BTreeMap<String, PhoneAlignment> {
        &self.alignments
    }

    /// Sorted, deduplicated speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .utterances
            .iter()
            .map(|u| u.speaker_id.clone())
            .collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn utterances_of<'a>(&'a self, speaker: &'a str) -> impl Iterator<Item = &'a Utterance> {
        self.utterances
            .iter()
            .filter(move |u| u.speaker_id == speaker)
    }

    /// Sub-corpus restricted to `ids` (unknown ids are an error).
    pub fn subset(&self, ids: &[String]) -> Result<Corpus> {
        let mut utterances = Vec::with_capacity(ids.len());
        let mut alignments = BTreeMap::new();
        for id in ids {
            let utt = self
                .utterance(id)
                .ok_or_else(|| Error::Reference(id.clone()))?;
            utterances.push(utt.clone());
            if let Some(a) = self.alignment(id) {
                alignments.insert(id.clone(), a.clone());
            }
        }
        Corpus::new(utterances, alignments)
    }

    /// Holds out the last `n_held` utterances (in id order) of every speaker.
    pub fn held_out_split(&self, n_held: usize) -> Result<Split> {
        let mut split = Split::default();
        for spk in self.speakers() {
            let mut ids: Vec<&String> = self.utterances_of(&spk).map(|u| &u.id).collect();
            ids.sort();
            if ids.len() <= n_held {
                return Err(Error::Config(format!(
                    "speaker {spk} has {} utterances, cannot hold out {n_held}",
                    ids.len()
                )));
            }
            let cut = ids.len() - n_held;
            split.train.extend(ids[..cut].iter().map(|s| s.to_string()));
            split.eval.extend(ids[cut..].iter().map(|s| s.to_string()));
        }
        Ok(split)
    }

    /// Writes `wav/`, `phn/` and the manifest under `root`.
    pub fn write(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root.join("wav"))?;
        std::fs::create_dir_all(root.join("phn"))?;
        let mut rows = Vec::with_capacity(self.len());
        for utt in &self.utterances {
            let wav_rel = PathBuf::from("wav").join(format!("{}.wav", utt.id));
            write_wav(&root.join(&wav_rel), &utt.samples, utt.sample_rate)?;
            let phn_rel = match self.alignment(&utt.id) {
                Some(a) => {
                    let rel = PathBuf::from("phn").join(format!("{}.PHN", utt.id));
                    std::fs::write(root.join(&rel), a.to_phn_string())?;
                    Some(rel)
                }
                None => None,
            };
            rows.push(ManifestRow {
                utt_id: utt.id.clone(),
                wav_path: wav_rel,
                phn_path: phn_rel,
                speaker_id: utt.speaker_id.clone(),
            });
        }
        write_manifest(&root.join(MANIFEST_FILE), &rows)
    }
}

fn check_alignment_fits(utt: &Utterance, alignment: &PhoneAlignment) -> Result<()> {
    let end = alignment.end_sample();
    if end > utt.samples.len() {
        return Err(Error::Alignment {
            utterance: utt.id.clone(),
            reason: format!(
                "last segment ends at sample {end} but the audio has {} samples",
                utt.samples.len()
            ),
        });
    }
    Ok(())
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["utt_id", "wav_path", "phn_path", "speaker_id"])?;
    for row in rows {
        let phn = row
            .phn_path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        w.write_record([
            row.utt_id.as_str(),
            &row.wav_path.to_string_lossy(),
            &phn,
            row.speaker_id.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads manifest rows. A leading `utt_id,...` header row is optional.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i == 0 && record.get(0) == Some("utt_id") {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected 4 columns, got {}", record.len()),
            });
        }
        let phn = record[2].trim();
        rows.push(ManifestRow {
            utt_id: record[0].to_string(),
            wav_path: PathBuf::from(&record[1]),
            phn_path: (!phn.is_empty()).then(|| PathBuf::from(phn)),
            speaker_id: record[3].to_string(),
        });
    }
    Ok(rows)
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Loads every manifest row under `root`. Files are read in parallel; the
/// result is ordered by utterance id.
pub fn load_corpus(root: &Path, manifest: &Path) -> Result<Corpus> {
    let rows = read_manifest(&resolve(root, manifest))?;
    let loaded: Vec<(Utterance, Option<PhoneAlignment>)> = rows
        .par_iter()
        .map(|row| {
            let (samples, rate) = read_wav(&resolve(root, &row.wav_path))?;
            let utt = Utterance::new(&row.utt_id, &row.speaker_id, samples, rate)?;
            let alignment = match &row.phn_path {
                Some(p) => {
                    let mut a = parse_phn(&resolve(root, p))?;
                    a.utterance_id = row.utt_id.clone();
                    check_alignment_fits(&utt, &a)?;
                    Some(a)
                }
                None => None,
            };
            Ok((utt, alignment))
        })
        .collect::<Result<_>>()?;
    let mut utterances = Vec::with_capacity(loaded.len());
    let mut alignments = BTreeMap::new();
    for (utt, alignment) in loaded {
        if let Some(a) = alignment {
            alignments.insert(utt.id.clone(), a);
        }
        utterances.push(utt);
    }
    Corpus::new(utterances, alignments)
}

/// Loads a corpus from a directory holding `manifest.csv`.
pub fn load_corpus_dir(root: &Path) -> Result<Corpus> {
    load_corpus(root, Path::new(MANIFEST_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_utt(id: &str, spk: &str, n: usize) -> Utterance {
        let samples = (0..n).map(|i| dequantize((i % 100) as i16 * 10)).collect();
        Utterance::new(id, spk, samples, 16000).unwrap()
    }

    #[test]
    fn utterance_invariants() {
        assert!(Utterance::new("a", "s", vec![], 16000).is_err());
        assert!(Utterance::new("a", "s", vec![0.0], 0).is_err());
        assert!(Utterance::new("a", "s", vec![1.5], 16000).is_err());
        assert!(Utterance::new("a", "s", vec![f64::NAN], 16000).is_err());
    }

    #[test]
    fn three_rows_sorted_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::new(
            vec![
                tiny_utt("c", "s1", 50),
                tiny_utt("a", "s1", 60),
                tiny_utt("b", "s2", 70),
            ],
            BTreeMap::new(),
        )
        .unwrap();
        corpus.write(dir.path()).unwrap();
        let loaded = load_corpus_dir(dir.path()).unwrap();
        let ids: Vec<_> = loaded.utterances().iter().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(loaded, corpus);
    }

    #[test]
    fn alignment_past_end_names_utterance() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write_wav(&root.join("u1.wav"), &[0.0; 100], 16000).unwrap();
        std::fs::write(root.join("u1.PHN"), "0 50 h#\n50 120 s\n").unwrap();
        std::fs::write(root.join("m.csv"), "u1,u1.wav,u1.PHN,spk\n").unwrap();
        match load_corpus(root, Path::new("m.csv")).unwrap_err() {
            Error::Alignment { utterance, .. } => assert_eq!(utterance, "u1"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_wav_names_path() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.csv"), "u1,nope.wav,,spk\n").unwrap();
        let err = load_corpus(dir.path(), Path::new("m.csv")).unwrap_err();
        assert!(matches!(err, Error::Load { .. }));
        assert!(err.to_string().contains("nope.wav"));
    }

    #[test]
    fn manifest_without_header_and_optional_phn() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "u1,a.wav,,s1\nu2,b.wav,b.PHN,s2\n").unwrap();
        let rows = read_manifest(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].phn_path, None);
        assert_eq!(rows[1].phn_path, Some(PathBuf::from("b.PHN")));
    }

    #[test]
    fn subset_and_speakers() {
        let corpus = Corpus::new(
            vec![
                tiny_utt("a", "s1", 10),
                tiny_utt("b", "s2", 10),
                tiny_utt("c", "s1", 10),
            ],
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(corpus.speakers(), ["s1", "s2"]);
        assert_eq!(corpus.utterances_of("s1").count(), 2);
        let sub = corpus.subset(&["c".into(), "a".into()]).unwrap();
        assert_eq!(sub.len(), 2);
        assert!(corpus.subset(&["zz".into()]).is_err());
    }
}
