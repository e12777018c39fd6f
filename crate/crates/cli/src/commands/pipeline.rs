use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use spkemb::backend::{
    compute_metrics, cosine_score, default_lda_dim, train_backend, Metrics, ScoreSet,
};
use spkemb::corpus::{
    make_trials, parse_trials, synth_corpus, Corpus, Split, SynthConfig, TrialList,
};
use spkemb::frontend::{features, write_feature_dump, MfccConfig};
use spkemb::model::{build_training_set, train as train_net, write_train_log, SpeakerNet, Tap};
use spkemb::report::{write_json, write_table};

use super::{
    all_ids, checkpoint, corpus, embeddings, net_config, num, required, split, CHECKPOINT_EXT,
};
use crate::config::{
    AblateParams, Backend, ExtractParams, MfccParams, ScoreParams, SynthParams, TrainParams,
};
use crate::error::{CliError, Result};

pub fn synth(p: &SynthParams, seed: u64, out: &Path) -> Result<()> {
    let config = SynthConfig {
        n_speakers: p.speakers,
        utts_per_speaker: p.utts_per_speaker,
        phones_per_utt: p.phones_per_utt,
        sample_rate: p.sample_rate,
        seed,
        critical_phone: p.critical_phone.clone(),
    };
    let corpus = synth_corpus(&config, &out.join("corpus"))?;
    let split = if p.held_out == 0 {
        Split {
            train: all_ids(&corpus),
            eval: Vec::new(),
        }
    } else {
        corpus.held_out_split(p.held_out)?
    };
    split.write(&out.join("split.json"))?;
    let pool = if split.eval.is_empty() {
        &split.train
    } else {
        &split.eval
    };
    make_trials(&corpus, pool, p.trials, seed)?.write(&out.join("trials.txt"))?;
    Ok(())
}

pub fn mfcc(p: &MfccParams, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let dir = out.join("features");
    std::fs::create_dir_all(&dir)?;
    let mut rows = Vec::with_capacity(corpus.len());
    for utt in corpus.utterances() {
        let fm = features(utt, &p.mfcc)?;
        write_feature_dump(&dir.join(format!("{}.feat", utt.id)), &fm, &p.mfcc, true)?;
        rows.push(vec![
            utt.id.clone(),
            fm.n_frames.to_string(),
            fm.dim.to_string(),
        ]);
    }
    write_table(
        &out.join("features.csv"),
        &["utterance_id", "n_frames", "dim"],
        &rows,
    )?;
    Ok(())
}

fn training_corpus(corpus: &Corpus, split: Option<&Split>) -> Result<Corpus> {
    match split {
        Some(s) => Ok(corpus.subset(&s.train)?),
        None => Ok(corpus.clone()),
    }
}

pub fn train(p: &TrainParams, seed: u64, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let split = p.split.as_deref().map(split).transpose()?;
    let tc = training_corpus(&corpus, split.as_ref())?;
    let set = build_training_set(&tc, &p.mfcc, p.hyper.augment.as_ref(), seed)?;
    let config = net_config(p.net.preset, set.speakers.len())
        .with_pooling(p.net.pooling)
        .with_relu_before_fc2(p.net.relu_before_fc2);
    let net = SpeakerNet::build(config, seed)?;
    let mut hyper = p.hyper.clone();
    hyper.seed = seed;
    let outcome = train_net(net, &set.examples, &hyper)?;

    let dir = out.join("checkpoints");
    std::fs::create_dir_all(&dir)?;
    for ck in &outcome.checkpoints {
        ck.save(
            &dir.join(format!("epoch_{:03}.{CHECKPOINT_EXT}", ck.epoch)),
            &set.speakers,
        )?;
    }
    write_train_log(&out.join("train_log.csv"), &outcome.log)?;
    let rows: Vec<Vec<String>> = outcome
        .epoch_loss
        .iter()
        .zip(&outcome.epoch_accuracy)
        .enumerate()
        .map(|(i, (l, a))| vec![(i + 1).to_string(), num(*l), num(*a)])
        .collect();
    write_table(
        &out.join("epochs.csv"),
        &["epoch", "loss", "accuracy"],
        &rows,
    )?;
    Ok(())
}

pub fn extract(p: &ExtractParams, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let ck = checkpoint(&p.checkpoint)?;
    let ids = all_ids(&corpus);
    let emb = embeddings(&ck.net, &corpus, &ids, p.tap, &p.mfcc)?;
    let dim = emb.values().next().map_or(0, Vec::len);
    let mut header = vec!["utterance_id".to_string(), "speaker_id".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = ids
        .iter()
        .map(|id| {
            let utt = corpus.utterance(id).expect("id taken from the corpus");
            let mut row = vec![id.clone(), utt.speaker_id.clone()];
            row.extend(emb[id].iter().map(|v| num(*v)));
            row
        })
        .collect();
    write_table(&out.join("embeddings.csv"), &header, &rows)?;
    Ok(())
}

/// Backend training ids: the split's train part, or everything outside
/// the trial list.
fn backend_ids(corpus: &Corpus, trials: &TrialList, split: Option<&Split>) -> Vec<String> {
    match split {
        Some(s) => s.train.clone(),
        None => {
            let used: BTreeSet<String> = trials.utterance_ids().into_iter().collect();
            all_ids(corpus)
                .into_iter()
                .filter(|id| !used.contains(id))
                .collect()
        }
    }
}

fn check_no_leak(backend_ids: &[String], trials: &TrialList) -> Result<()> {
    let used: BTreeSet<String> = trials.utterance_ids().into_iter().collect();
    if let Some(id) = backend_ids.iter().find(|id| used.contains(*id)) {
        return Err(CliError::Invalid(format!(
            "backend training utterance {id} also appears in the trial list"
        )));
    }
    Ok(())
}

/// Scores `trials` with one backend and tap.
#[allow(clippy::too_many_arguments)]
fn score_trials(
    net: &SpeakerNet,
    corpus: &Corpus,
    trials: &TrialList,
    train_ids: &[String],
    tap: Tap,
    backend: Backend,
    lda_dim: Option<usize>,
    plda_iters: usize,
    mfcc: &MfccConfig,
) -> Result<ScoreSet> {
    let trial_ids = trials.utterance_ids();
    let emb = embeddings(net, corpus, &trial_ids, tap, mfcc)?;
    let scores = match backend {
        Backend::Cosine => ScoreSet::build(trials, "cosine", tap.as_str(), |e, t| {
            cosine_score(&emb[e], &emb[t])
        })?,
        Backend::Plda => {
            check_no_leak(train_ids, trials)?;
            let train_emb = embeddings(net, corpus, train_ids, tap, mfcc)?;
            let vectors: Vec<Vec<f64>> = train_ids.iter().map(|id| train_emb[id].clone()).collect();
            let labels: Vec<&str> = train_ids
                .iter()
                .map(|id| corpus.utterance(id).map(|u| u.speaker_id.as_str()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| CliError::Invalid("backend id missing from the corpus".into()))?;
            let n_speakers = labels.iter().collect::<BTreeSet<_>>().len();
            let dim = lda_dim.unwrap_or_else(|| {
                default_lda_dim(vectors.first().map_or(1, Vec::len), n_speakers, 200)
            });
            let model = train_backend(&vectors, &labels, dim, plda_iters)?;
            let scorer = model.scorer()?;
            ScoreSet::build(trials, "plda", tap.as_str(), |e, t| {
                scorer.score(&emb[e], &emb[t])
            })?
        }
    };
    Ok(scores)
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    backend: String,
    tap: String,
    epoch: usize,
    #[serde(flatten)]
    metrics: Metrics,
}

fn metric_row(m: &Metrics) -> Vec<String> {
    vec![
        num(m.eer),
        num(m.dcf_p01),
        num(m.dcf_p001),
        m.n_target.to_string(),
        m.n_nontarget.to_string(),
    ]
}

pub fn score(p: &ScoreParams, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let ck = checkpoint(&p.checkpoint)?;
    let trials = parse_trials(required(&p.trials, "trials")?)?;
    trials.resolve(&corpus)?;
    let split = p.split.as_deref().map(split).transpose()?;
    let train_ids = backend_ids(&corpus, &trials, split.as_ref());
    let scores = score_trials(
        &ck.net,
        &corpus,
        &trials,
        &train_ids,
        p.tap,
        p.scoring.backend,
        p.scoring.lda_dim,
        p.scoring.plda_iters,
        &p.mfcc,
    )?;
    scores.write(&out.join("scores.txt"))?;
    let metrics = compute_metrics(&scores)?;
    let mut row = vec![
        scores.backend.clone(),
        scores.tap.clone(),
        ck.meta.epoch.to_string(),
    ];
    row.extend(metric_row(&metrics));
    write_table(
        &out.join("metrics.csv"),
        &[
            "backend",
            "tap",
            "epoch",
            "eer",
            "dcf_p01",
            "dcf_p001",
            "n_target",
            "n_nontarget",
        ],
        &[row],
    )?;
    write_json(
        &out.join("metrics.json"),
        &MetricsReport {
            backend: scores.backend,
            tap: scores.tap,
            epoch: ck.meta.epoch,
            metrics,
        },
    )?;
    Ok(())
}

/// Trains one net per `relu_before_fc2` setting and scores both taps with
/// LDA and PLDA.
pub fn ablate_relu(p: &AblateParams, seed: u64, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let split = split(&p.split)?;
    let trials = parse_trials(required(&p.trials, "trials")?)?;
    trials.resolve(&corpus)?;
    let tc = training_corpus(&corpus, Some(&split))?;
    let set = build_training_set(&tc, &p.mfcc, p.hyper.augment.as_ref(), seed)?;
    let mut hyper = p.hyper.clone();
    hyper.seed = seed;

    let mut cells = Vec::with_capacity(4);
    for relu in [true, false] {
        let config = net_config(p.preset, set.speakers.len())
            .with_pooling(p.pooling)
            .with_relu_before_fc2(relu);
        let outcome = train_net(SpeakerNet::build(config, seed)?, &set.examples, &hyper)?;
        for tap in [Tap::Fc1, Tap::Fc2] {
            let scores = score_trials(
                outcome.final_net(),
                &corpus,
                &trials,
                &split.train,
                tap,
                Backend::Plda,
                p.lda_dim,
                p.plda_iters,
                &p.mfcc,
            )?;
            cells.push((tap, relu, compute_metrics(&scores)?));
        }
    }
    cells.sort_by_key(|(tap, relu, _)| (tap.as_str(), !relu));
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|(tap, relu, m)| {
            vec![
                tap.as_str().to_string(),
                if *relu { "yes" } else { "no" }.to_string(),
                num(m.eer),
                num(m.dcf_p01),
                num(m.dcf_p001),
            ]
        })
        .collect();
    write_table(
        &out.join("ablation.csv"),
        &["tap", "relu_before_fc2", "eer", "dcf_p01", "dcf_p001"],
        &rows,
    )?;
    Ok(())
}
