//! Command-line contract: determinism, exit codes, the error line, config
//! handling and the shape of each subcommand's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spkemb_cli::{load_run_config, Command as RunCommand, RUN_CONFIG_FILE};

fn spkemb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spkemb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = spkemb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Relative path -> bytes for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir(root)
        .into_iter()
        .map(|f| {
            (
                f.strip_prefix(root).unwrap().to_path_buf(),
                std::fs::read(&f).unwrap(),
            )
        })
        .collect()
}

fn walkdir(root: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walkdir(&path));
        } else {
            files.push(path);
        }
    }
    files.sort();
    files
}

fn small_synth(dir: &Path) -> PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--speakers",
        "4",
        "--utts-per-speaker",
        "5",
        "--phones-per-utt",
        "10",
        "--held-out",
        "2",
        "--trials",
        "20",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    out
}

fn small_train(dir: &Path, synth: &Path, pooling: &str) -> PathBuf {
    let out = dir.join(format!("train_{pooling}"));
    ok(&[
        "train",
        "--corpus",
        p(&synth.join("corpus")),
        "--split",
        p(&synth.join("split.json")),
        "--pooling",
        pooling,
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]);
    out
}

#[test]
fn synth_twice_gives_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let args = ["synth", "--speakers", "20", "--seed", "7", "--out", p(&out)];
    ok(&args);
    let first = tree(&out);
    std::fs::remove_dir_all(&out).unwrap();
    ok(&args);
    assert_eq!(first, tree(&out));
    assert!(first.contains_key(Path::new("corpus/manifest.csv")));
    assert!(first.contains_key(Path::new("split.json")));
    assert!(first.contains_key(Path::new("trials.txt")));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["bogus"],
        vec!["synth", "--no-such-flag"],
        vec!["synth", "--speakers", "many"],
        vec![],
    ] {
        let out = spkemb(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: kind=usage msg="), "{err}");
    }
    assert_eq!(spkemb(&["--help"]).status.code(), Some(0));
    assert_eq!(spkemb(&["--version"]).status.code(), Some(0));
}

#[test]
fn failures_print_one_parseable_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (vec!["train"], "config"),
        (vec!["train", "--corpus", "/no/such/corpus"], "load"),
        (vec!["synth", "--speakers", "1"], "config"),
    ];
    for (mut args, kind) in cases {
        let out_dir = dir.path().join(kind);
        args.extend(["--out", p(&out_dir)]);
        let out = spkemb(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.lines().count(), 1, "{err}");
        let line = err.trim_end();
        let rest = line.strip_prefix("error: kind=").expect("prefix");
        let (k, msg) = rest.split_once(" msg=").expect("msg field");
        assert_eq!(k, kind, "{line}");
        assert!(!msg.is_empty());
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 1, "command": {"synth": {"speakers": 3, "colour": "red"}}}"#,
    )
    .unwrap();
    let out = spkemb(&[
        "synth",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=config"));

    std::fs::write(&cfg, r#"{"seed": 1, "extra": 0, "command": {"synth": {}}}"#).unwrap();
    assert_eq!(
        spkemb(&["synth", "--config", p(&cfg)]).status.code(),
        Some(1)
    );
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"command": {"synth": {}}}"#).unwrap();
    let out = spkemb(&[
        "train",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'synth'"));
}

#[test]
fn flags_override_the_config_and_the_record_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "command": {"synth": {"speakers": 3, "utts_per_speaker": 4, "held_out": 2, "trials": 10}}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "synth",
        "--config",
        p(&cfg),
        "--speakers",
        "4",
        "--out",
        p(&out),
    ]);
    let rc = load_run_config(&out.join(RUN_CONFIG_FILE)).unwrap();
    assert_eq!(rc.seed, 5);
    assert_eq!(rc.out_dir, out);
    assert_eq!(rc.version, env!("CARGO_PKG_VERSION"));
    match rc.command {
        RunCommand::Synth(s) => {
            assert_eq!(s.speakers, 4);
            assert_eq!(s.utts_per_speaker, 4);
        }
        other => panic!("unexpected command {other:?}"),
    }
    let manifest = std::fs::read_to_string(out.join("corpus/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 4 * 4);
}

#[test]
fn both_backends_emit_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path());
    let train = small_train(dir.path(), &synth, "statistics");
    assert!(train.join("train_log.csv").is_file());
    assert!(train.join("checkpoints/epoch_000.ckpt").is_file());
    assert!(train.join("checkpoints/epoch_001.ckpt").is_file());
    for backend in ["cosine", "plda"] {
        let out = dir.path().join(backend);
        ok(&[
            "score",
            "--corpus",
            p(&synth.join("corpus")),
            "--checkpoint",
            p(&train.join("checkpoints/epoch_001.ckpt")),
            "--trials",
            p(&synth.join("trials.txt")),
            "--split",
            p(&synth.join("split.json")),
            "--backend",
            backend,
            "--lda-dim",
            "3",
            "--out",
            p(&out),
        ]);
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap())
                .unwrap();
        assert_eq!(m["backend"], backend);
        assert_eq!(m["tap"], "fc2");
        for key in ["eer", "dcf_p01", "dcf_p001"] {
            let v = m[key].as_f64().unwrap();
            assert!(v.is_finite() && v >= 0.0, "{key} = {v}");
        }
        let scores = std::fs::read_to_string(out.join("scores.txt")).unwrap();
        assert_eq!(scores.lines().count(), 20);
    }
}

#[test]
fn ablation_table_has_four_cells() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path());
    let out = dir.path().join("ablate");
    ok(&[
        "ablate-relu",
        "--corpus",
        p(&synth.join("corpus")),
        "--split",
        p(&synth.join("split.json")),
        "--trials",
        p(&synth.join("trials.txt")),
        "--epochs",
        "1",
        "--lda-dim",
        "3",
        "--out",
        p(&out),
    ]);
    let text = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tap,relu_before_fc2,eer,dcf_p01,dcf_p001");
    let cells: Vec<(&str, &str)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5);
            (f[0], f[1])
        })
        .collect();
    assert_eq!(
        cells,
        [("fc1", "yes"), ("fc1", "no"), ("fc2", "yes"), ("fc2", "no")]
    );
}

#[test]
fn analysis_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path());
    let corpus = synth.join("corpus");
    let split = synth.join("split.json");
    let train = small_train(dir.path(), &synth, "average");
    let ck = train.join("checkpoints/epoch_001.ckpt");

    let broad = dir.path().join("broad");
    ok(&[
        "analyze-broad",
        "--corpus",
        p(&corpus),
        "--split",
        p(&split),
        "--checkpoints",
        p(&train.join("checkpoints")),
        "--layers",
        "1,6",
        "--out",
        p(&broad),
    ]);
    let acc = std::fs::read_to_string(broad.join("broad_accuracy.csv")).unwrap();
    assert_eq!(acc.lines().count(), 1 + 2 * 2);
    let (w, h, _) = spkemb::report::read_pgm(&broad.join("broad_accuracy.pgm")).unwrap();
    assert_eq!((w, h), (2, 2));
    assert!(broad.join("confusion/epoch_001_layer_6.pgm").is_file());

    let probe = dir.path().join("probe");
    ok(&[
        "probe",
        "--corpus",
        p(&corpus),
        "--split",
        p(&split),
        "--checkpoints",
        p(&ck),
        "--layers",
        "6",
        "--max-epochs",
        "3",
        "--out",
        p(&probe),
    ]);
    let fer = std::fs::read_to_string(probe.join("probe_fer.csv")).unwrap();
    assert!(fer.starts_with("epoch,layer,probe_fer,"));
    assert_eq!(fer.lines().count(), 2);

    let crit = dir.path().join("crit");
    ok(&[
        "critical-phones",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&ck),
        "--out",
        p(&crit),
    ]);
    let hist = std::fs::read_to_string(crit.join("critical_histogram.csv")).unwrap();
    assert!(hist.starts_with("phone,count,rank_in_frequency_histogram\n"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 20);

    let sim = dir.path().join("sim");
    ok(&[
        "simmatrix",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&ck),
        "--utterance-a",
        "spk000_u00",
        "--utterance-b",
        "spk001_u00",
        "--out",
        p(&sim),
    ]);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sim.join("simmatrix.json")).unwrap())
            .unwrap();
    assert_eq!(side["min"], -1.0);
    assert_eq!(side["max"], 1.0);
    assert_eq!(side["x_ticks"][0]["label"], "h#");

    let proj = dir.path().join("proj");
    ok(&[
        "project",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&ck),
        "--split",
        p(&split),
        "--subset",
        "eval",
        "--out",
        p(&proj),
    ]);
    let rows = std::fs::read_to_string(proj.join("projection.csv")).unwrap();
    assert!(rows.starts_with("utterance_id,speaker_id,segment,phone,class,pc1,pc2\n"));

    let rep = dir.path().join("rep");
    ok(&["report", p(&broad), p(&crit), "--out", p(&rep)]);
    let summary = std::fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert!(summary.starts_with("source,line,record\n"));
    assert!(summary.contains("broad_accuracy.csv"));
    assert!(summary.contains("critical_histogram.csv"));
}

#[test]
fn frame_analyses_refuse_statistics_pooling() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path());
    let train = small_train(dir.path(), &synth, "statistics");
    let out = spkemb(&[
        "critical-phones",
        "--corpus",
        p(&synth.join("corpus")),
        "--checkpoint",
        p(&train.join("checkpoints/epoch_001.ckpt")),
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=unsupported_mode"));
}

#[test]
fn mfcc_and_extract_cover_every_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path());
    let corpus = synth.join("corpus");
    let feats = dir.path().join("mfcc");
    ok(&["mfcc", "--corpus", p(&corpus), "--out", p(&feats)]);
    let (fm, side) =
        spkemb::frontend::read_feature_dump(&feats.join("features/spk000_u00.feat")).unwrap();
    assert_eq!((fm.dim, side.cmn), (40, true));

    let train = small_train(dir.path(), &synth, "statistics");
    let ext = dir.path().join("ext");
    ok(&[
        "extract",
        "--corpus",
        p(&corpus),
        "--checkpoint",
        p(&train.join("checkpoints/epoch_001.ckpt")),
        "--tap",
        "fc1",
        "--out",
        p(&ext),
    ]);
    let text = std::fs::read_to_string(ext.join("embeddings.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 20);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 2 + 96);
}
