use std::path::PathBuf;

use redd_core::corpus::{write_corpus, Corpus, Label, PageRecord, Split};
use redd_core::pipeline::{run_pipeline, PipelineConfig, REPORT_FILE};
use redd_core::Error;

#[test]
fn synthetic_default_is_reproducible_and_accurate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&PipelineConfig::synthetic_default(a.path())).unwrap();
    run_pipeline(&PipelineConfig::synthetic_default(b.path())).unwrap();
    let ja = std::fs::read_to_string(a.path().join(REPORT_FILE)).unwrap();
    let jb = std::fs::read_to_string(b.path().join(REPORT_FILE)).unwrap();
    assert!(ja == jb, "reports differ");
    let auc = ra.metrics["test.auc"];
    assert!(auc >= 0.95, "auc {auc}");
    for name in [
        "corpus",
        "projection",
        "topic",
        "calibration",
        "model",
        "scores",
        "domains",
        "queue",
        "metrics",
    ] {
        let art = &ra.artifacts[name];
        let bytes = std::fs::read(a.path().join(&art.file)).unwrap();
        assert_eq!(bytes.len() as u64, art.bytes, "{name}");
    }
    assert_eq!(
        ra.stages,
        [
            "load",
            "project",
            "topic",
            "filter",
            "train",
            "predict",
            "aggregate",
            "queue"
        ]
    );
}

#[test]
fn missing_corpus_path_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::synthetic_default(dir.path());
    cfg.corpus.synthetic = None;
    match run_pipeline(&cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "corpus.path"),
        other => panic!("unexpected {other:?}"),
    }
    cfg.corpus.path = Some(PathBuf::from("/nonexistent/corpus.jsonl"));
    match run_pipeline(&cfg) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "corpus.path"),
        other => panic!("unexpected {other:?}"),
    }
}

fn page(i: usize, v: Vec<f32>, label: Label) -> PageRecord {
    let mut p = PageRecord::new(format!("p{i}"), format!("d{i}.example"), "en");
    p.embedding_reduced = Some(v);
    p.label = Some(label);
    p.split = Split::Train;
    p.categories.insert("t".into());
    p
}

#[test]
fn stage_failure_names_stage_and_keeps_prior_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // Every page trustworthy: training has a single class.
    let records: Vec<PageRecord> = (0..20)
        .map(|i| page(i, vec![1.0, 0.1 * i as f32, 0.0], Label::Trustworthy))
        .collect();
    let corpus = Corpus::new("c", 3, 3, records).unwrap();
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, write_corpus(&corpus)).unwrap();
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::synthetic_default(&out);
    cfg.corpus.synthetic = None;
    cfg.corpus.path = Some(path);
    cfg.d_red = 3;
    cfg.topic.category = Some("t".into());
    cfg.topic.threshold = Some(0.0);
    cfg.topic.bucket_edges = vec![0.0, 0.5, 1.0];
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "train");
            assert!(matches!(*source, Error::SingleClass(_)), "{source}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(out.join("topic.json").is_file());
    assert!(out.join("corpus.jsonl").is_file());
    assert!(!out.join("model.redd").exists());
    assert!(!out.join(REPORT_FILE).exists());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = PipelineConfig::synthetic_default("out");
    let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn example_config_parses() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/pipeline.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.d_red, 100);
    assert_eq!(cfg.triage.cutoff, 300);
    assert!(cfg.corpus.path.unwrap().ends_with("data/corpus.jsonl"));
}

#[test]
fn score_file_round_trips_and_rejects_bad_split() {
    use redd_core::pipeline::{parse_scores, write_scores, ScoreRecord};
    let records = vec![
        ScoreRecord {
            page_id: "a".into(),
            domain: "x.example".into(),
            score: 0.25,
            label: Some(redd_core::corpus::Label::Disinformation),
            split: "test".into(),
        },
        ScoreRecord {
            page_id: "b".into(),
            domain: "y.example".into(),
            score: 1.0 / 3.0,
            label: None,
            split: "unassigned".into(),
        },
    ];
    assert_eq!(parse_scores(&write_scores(&records)).unwrap(), records);
    let minimal = parse_scores("{\"page_id\":\"c\",\"score\":0.5}\n").unwrap();
    assert_eq!(minimal[0].split, "unassigned");
    assert!(parse_scores("{\"page_id\":\"c\",\"score\":0.5,\"split\":\"dev\"}\n").is_err());
}
