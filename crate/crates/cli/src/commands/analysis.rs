use std::path::Path;

use serde::Serialize;
use spkemb::analysis::{
    critical_phone_stats, cross_utterance_similarity, evaluate_broad_class,
    extract_frame_embeddings, linear_probe_phones, pca_project_2d, phone_ticks, utterance_segments,
};
use spkemb::corpus::BroadClass;
use spkemb::frontend::features;
use spkemb::model::{FrameEmbeddings, SpeakerNet};
use spkemb::report::{write_histogram, write_json, write_pgm, write_table, Heatmap, Tick};

use super::{check_layers, checkpoint, checkpoints, corpus, num, split, subset_ids};
use crate::config::{BroadParams, CriticalParams, ProbeParams, ProjectParams, SimParams};
use crate::error::{CliError, Result};

fn class_ticks(present: &[BroadClass]) -> Vec<Tick> {
    present
        .iter()
        .enumerate()
        .map(|(i, c)| Tick {
            index: i,
            label: c.as_str().to_string(),
        })
        .collect()
}

/// `layer x epoch` heatmap of one value per cell, layer 1 at the bottom.
fn layer_epoch_heatmap(
    epochs: &[usize],
    layers: &[usize],
    value: impl Fn(usize, usize) -> f64,
    title: &str,
) -> Result<Heatmap> {
    let mut values = Vec::with_capacity(epochs.len() * layers.len());
    for &layer in layers.iter().rev() {
        for &epoch in epochs {
            values.push(value(epoch, layer));
        }
    }
    let x: Vec<Tick> = epochs
        .iter()
        .enumerate()
        .map(|(i, e)| Tick {
            index: i,
            label: e.to_string(),
        })
        .collect();
    let y: Vec<Tick> = layers
        .iter()
        .rev()
        .enumerate()
        .map(|(i, l)| Tick {
            index: i,
            label: l.to_string(),
        })
        .collect();
    Ok(Heatmap::new(layers.len(), epochs.len(), values)?
        .titled(title, "epoch", "layer")
        .with_range(0.0, 1.0)
        .with_ticks(x, y))
}

pub fn broad(p: &BroadParams, out: &Path) -> Result<()> {
    check_layers(&p.layers)?;
    let corpus = corpus(&p.corpus)?;
    let split = split(&p.split)?;
    let loaded = checkpoints(&p.checkpoints)?;
    let nets: Vec<(usize, &SpeakerNet)> = loaded.iter().map(|c| (c.meta.epoch, &c.net)).collect();
    let cells = evaluate_broad_class(
        &nets,
        &corpus,
        &split.train,
        &split.eval,
        &p.layers,
        &p.mfcc,
    )?;

    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.epoch.to_string(),
                c.layer.to_string(),
                num(c.accuracy),
                c.correct.to_string(),
                c.total.to_string(),
                c.n_classes.to_string(),
                num(c.chance),
                num(c.chance_lo),
                num(c.chance_hi),
                c.ties.to_string(),
                c.skipped_train.to_string(),
                c.skipped_eval.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("broad_accuracy.csv"),
        &[
            "epoch",
            "layer",
            "accuracy",
            "correct",
            "total",
            "n_classes",
            "chance",
            "chance_lo",
            "chance_hi",
            "ties",
            "skipped_train",
            "skipped_eval",
        ],
        &rows,
    )?;

    let dir = out.join("confusion");
    std::fs::create_dir_all(&dir)?;
    for c in &cells {
        let present = c.centroids.present();
        let stem = format!("epoch_{:03}_layer_{}", c.epoch, c.layer);
        let mut header = vec!["truth"];
        header.extend(present.iter().map(|k| k.as_str()));
        let rows: Vec<Vec<String>> = present
            .iter()
            .map(|t| {
                let mut row = vec![t.as_str().to_string()];
                row.extend(
                    present
                        .iter()
                        .map(|q| c.confusion.counts[t.index()][q.index()].to_string()),
                );
                row
            })
            .collect();
        write_table(&dir.join(format!("{stem}.csv")), &header, &rows)?;

        // row-normalised, so each truth row shows where its segments went
        let sums = c.confusion.row_sums();
        let mut values = Vec::with_capacity(present.len() * present.len());
        for t in &present {
            for q in &present {
                let n = sums[t.index()];
                values.push(if n == 0 {
                    0.0
                } else {
                    c.confusion.counts[t.index()][q.index()] as f64 / n as f64
                });
            }
        }
        let ticks = class_ticks(&present);
        let map = Heatmap::new(present.len(), present.len(), values)?
            .titled(
                &format!("broad class confusion, epoch {} layer {}", c.epoch, c.layer),
                "predicted",
                "truth",
            )
            .with_range(0.0, 1.0)
            .with_ticks(ticks.clone(), ticks);
        write_pgm(&dir.join(format!("{stem}.pgm")), &map)?;
    }

    let epochs: Vec<usize> = nets.iter().map(|(e, _)| *e).collect();
    let acc = |e: usize, l: usize| {
        cells
            .iter()
            .find(|c| c.epoch == e && c.layer == l)
            .map_or(f64::NAN, |c| c.accuracy)
    };
    let map = layer_epoch_heatmap(&epochs, &p.layers, acc, "broad class accuracy")?;
    write_pgm(&out.join("broad_accuracy.pgm"), &map)?;
    Ok(())
}

pub fn probe(p: &ProbeParams, seed: u64, out: &Path) -> Result<()> {
    check_layers(&p.layers)?;
    let corpus = corpus(&p.corpus)?;
    let split = split(&p.split)?;
    let loaded = checkpoints(&p.checkpoints)?;
    let nets: Vec<(usize, &SpeakerNet)> = loaded.iter().map(|c| (c.meta.epoch, &c.net)).collect();
    let mut config = p.probe.clone();
    config.seed = seed;
    let rows = linear_probe_phones(
        &nets,
        &corpus,
        &split.train,
        &split.eval,
        &p.layers,
        &p.mfcc,
        &config,
    )?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let q = &r.result;
            vec![
                r.epoch.to_string(),
                r.layer.to_string(),
                num(q.frame_error_rate),
                num(q.majority_error_rate),
                q.epochs.to_string(),
                num(q.final_loss),
                q.converged.to_string(),
                q.n_train.to_string(),
                q.n_eval.to_string(),
                q.n_labels.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("probe_fer.csv"),
        &[
            "epoch",
            "layer",
            "probe_fer",
            "majority_error_rate",
            "probe_epochs",
            "final_loss",
            "converged",
            "n_train",
            "n_eval",
            "n_labels",
        ],
        &table,
    )?;
    let epochs: Vec<usize> = nets.iter().map(|(e, _)| *e).collect();
    let fer = |e: usize, l: usize| {
        rows.iter()
            .find(|r| r.epoch == e && r.layer == l)
            .map_or(f64::NAN, |r| r.result.frame_error_rate)
    };
    let map = layer_epoch_heatmap(&epochs, &p.layers, fer, "probe FER")?;
    write_pgm(&out.join("probe_fer.pgm"), &map)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CriticalSummary {
    epoch: usize,
    utterances: usize,
    skipped: usize,
    ties: usize,
    zero_frames: usize,
    dominant_phone: Option<String>,
}

pub fn critical(p: &CriticalParams, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let ck = checkpoint(&p.checkpoint)?;
    let ids = subset_ids(&corpus, p.split.as_ref(), p.subset)?;
    let report = critical_phone_stats(&ck.net, &corpus, &ids, &p.mfcc)?;

    write_histogram(
        &out.join("critical_histogram.csv"),
        &report.histogram_rows(),
    )?;
    let rank = report.frequency_rank();
    let mut worst: Vec<(String, usize, usize)> = report
        .worst_histogram
        .iter()
        .map(|(ph, c)| (ph.clone(), *c, rank.get(ph).copied().unwrap_or(0)))
        .collect();
    worst.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    write_histogram(&out.join("worst_histogram.csv"), &worst)?;
    let mut freq: Vec<(String, usize, usize)> = report
        .frequency
        .iter()
        .map(|(ph, c)| (ph.clone(), *c, rank[ph]))
        .collect();
    freq.sort_by_key(|r| r.2);
    write_histogram(&out.join("phone_frequency.csv"), &freq)?;

    let rows: Vec<Vec<String>> = report
        .utterances
        .iter()
        .map(|u| {
            vec![
                u.utterance_id.clone(),
                u.speaker_id.clone(),
                u.best_phone.clone(),
                num(u.best_cosine),
                u.worst_phone.clone(),
                num(u.worst_cosine),
                u.tied.to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("critical_utterances.csv"),
        &[
            "utterance_id",
            "speaker_id",
            "best_phone",
            "best_cosine",
            "worst_phone",
            "worst_cosine",
            "tied",
        ],
        &rows,
    )?;
    let frames: Vec<Vec<String>> = report
        .utterances
        .iter()
        .flat_map(|u| {
            u.frame_cosines
                .iter()
                .enumerate()
                .map(|(i, c)| vec![u.utterance_id.clone(), i.to_string(), num(*c)])
        })
        .collect();
    write_table(
        &out.join("frame_cosines.csv"),
        &["utterance_id", "frame", "cosine"],
        &frames,
    )?;
    write_json(
        &out.join("critical_summary.json"),
        &CriticalSummary {
            epoch: ck.meta.epoch,
            utterances: report.utterances.len(),
            skipped: report.skipped,
            ties: report.ties,
            zero_frames: report.zero_frames,
            dominant_phone: report.dominant_phone(),
        },
    )?;
    Ok(())
}

fn layer_frames(
    net: &SpeakerNet,
    fm: &spkemb::frontend::FeatureMatrix,
    layer: usize,
) -> Result<FrameEmbeddings> {
    let mut all = net.frame_mode_forward(fm)?;
    if !(1..=all.len()).contains(&layer) {
        return Err(CliError::Invalid(format!(
            "layer {layer} outside 1..={}",
            all.len()
        )));
    }
    Ok(all.swap_remove(layer - 1))
}

fn ticks(fe: &FrameEmbeddings, corpus: &spkemb::corpus::Corpus) -> Vec<Tick> {
    corpus
        .alignment(&fe.utterance_id)
        .map(|a| {
            phone_ticks(fe, a)
                .into_iter()
                .map(|(index, label)| Tick { index, label })
                .collect()
        })
        .unwrap_or_default()
}

pub fn simmatrix(p: &SimParams, out: &Path) -> Result<()> {
    let corpus = corpus(&p.corpus)?;
    let ck = checkpoint(&p.checkpoint)?;
    let utt = |id: &str, name: &'static str| {
        if id.is_empty() {
            return Err(CliError::Missing(name));
        }
        corpus
            .utterance(id)
            .ok_or_else(|| CliError::Core(spkemb::Error::Reference(id.to_string())))
    };
    let a = layer_frames(
        &ck.net,
        &features(utt(&p.utterance_a, "utterance_a")?, &p.mfcc)?,
        p.layer,
    )?;
    let b = layer_frames(
        &ck.net,
        &features(utt(&p.utterance_b, "utterance_b")?, &p.mfcc)?,
        p.layer,
    )?;
    let m = cross_utterance_similarity(&a, &b)?;

    let mut header = vec!["frame".to_string()];
    header.extend((0..m.cols).map(|j| format!("b{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..m.rows)
        .map(|i| {
            let mut row = vec![format!("a{i}")];
            row.extend((0..m.cols).map(|j| num(m.get(i, j))));
            row
        })
        .collect();
    write_table(&out.join("simmatrix.csv"), &header, &rows)?;
    let map = Heatmap::new(m.rows, m.cols, m.values.clone())?
        .titled(
            &format!(
                "layer {} frame cosine, epoch {}, {} vs {}",
                p.layer, ck.meta.epoch, m.utterance_a, m.utterance_b
            ),
            &m.utterance_b,
            &m.utterance_a,
        )
        .with_range(-1.0, 1.0)
        .with_ticks(ticks(&b, &corpus), ticks(&a, &corpus));
    write_pgm(&out.join("simmatrix.pgm"), &map)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProjectionSummary {
    epoch: usize,
    layer: usize,
    points: usize,
    skipped_segments: usize,
    eigenvalues: [f64; 2],
    explained_variance_ratio: [f64; 2],
}

pub fn project(p: &ProjectParams, out: &Path) -> Result<()> {
    check_layers(&[p.layer])?;
    let corpus = corpus(&p.corpus)?;
    let ck = checkpoint(&p.checkpoint)?;
    let ids = subset_ids(&corpus, p.split.as_ref(), p.subset)?;
    let frames = extract_frame_embeddings(&ck.net, &corpus, &ids, &p.mfcc)?;
    let mut segments = Vec::new();
    let mut skipped = 0;
    for per_layer in &frames {
        let fe = &per_layer[p.layer - 1];
        if let Some(a) = corpus.alignment(&fe.utterance_id) {
            let (segs, s) = utterance_segments(fe, a)?;
            segments.extend(segs);
            skipped += s;
        }
    }
    let vectors: Vec<Vec<f64>> = segments.iter().map(|s| s.vector.clone()).collect();
    let proj = pca_project_2d(&vectors)?;
    let rows: Vec<Vec<String>> = segments
        .iter()
        .zip(&proj.coords)
        .map(|(s, c)| {
            let spk = corpus
                .utterance(&s.utterance_id)
                .map(|u| u.speaker_id.clone())
                .unwrap_or_default();
            vec![
                s.utterance_id.clone(),
                spk,
                s.segment.to_string(),
                s.phone.clone(),
                s.class.as_str().to_string(),
                num(c[0]),
                num(c[1]),
            ]
        })
        .collect();
    write_table(
        &out.join("projection.csv"),
        &[
            "utterance_id",
            "speaker_id",
            "segment",
            "phone",
            "class",
            "pc1",
            "pc2",
        ],
        &rows,
    )?;
    write_json(
        &out.join("projection.json"),
        &ProjectionSummary {
            epoch: ck.meta.epoch,
            layer: p.layer,
            points: segments.len(),
            skipped_segments: skipped,
            eigenvalues: proj.eigenvalues,
            explained_variance_ratio: proj.explained_variance_ratio,
        },
    )?;
    Ok(())
}
