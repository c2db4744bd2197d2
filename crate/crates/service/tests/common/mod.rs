#![allow(dead_code)]

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use redd_core::corpus::{write_corpus, Corpus, Label, PageRecord, Split};
use redd_core::pipeline::{run_pipeline, PipelineConfig};
use redd_service::{bootstrap_from_run, Service, ServiceConfig};

pub const DIM: usize = 8;
pub const TOPIC: &str = "t";
pub const BAD: &str = "bad.example";

/// All pages sit near the topic axis. Class is carried by coordinate 1;
/// `bad.example` looks trustworthy on it but owns coordinate 2. Its train
/// pages are unlabeled, its test pages are labeled disinformation.
pub fn corpus() -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut records = Vec::new();
    let mut n = 0;
    let mut push = |domain: String,
                    class: f64,
                    bad: f64,
                    label: Option<Label>,
                    split: Split,
                    rng: &mut ChaCha8Rng| {
        let mut v = vec![0f32; DIM];
        for (j, x) in v.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let base = match j {
                0 => 6.0,
                1 => class,
                2 => bad,
                _ => 0.0,
            };
            *x = (base + 0.5 * z) as f32;
        }
        let mut p = PageRecord::new(
            format!("p{n:04}"),
            domain,
            if n % 3 == 0 { "de" } else { "en" },
        );
        p.text = format!("page {n}");
        p.embedding_reduced = Some(v);
        p.categories.insert(TOPIC.into());
        p.label = label;
        p.split = split;
        records.push(p);
        n += 1;
    };
    for d in 0..60 {
        let disinfo = d % 2 == 0;
        let domain = format!("d{d:02}.example");
        for i in 0..4 {
            let label = if disinfo {
                Label::Disinformation
            } else {
                Label::Trustworthy
            };
            let split = if i == 3 { Split::Test } else { Split::Train };
            push(
                domain.clone(),
                if disinfo { 1.5 } else { -1.5 },
                0.0,
                Some(label),
                split,
                &mut rng,
            );
        }
    }
    for i in 0..12 {
        let (label, split) = if i < 8 {
            (None, Split::Unassigned)
        } else {
            (Some(Label::Disinformation), Split::Test)
        };
        push(BAD.into(), -1.5, 3.0, label, split, &mut rng);
    }
    Corpus::new("service-fixture", DIM, DIM, records).unwrap()
}

pub fn run_config(corpus_path: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::synthetic_default(out);
    cfg.corpus.synthetic = None;
    cfg.corpus.path = Some(corpus_path.to_path_buf());
    cfg.d_red = DIM;
    cfg.topic.id = TOPIC.into();
    cfg.topic.category = Some(TOPIC.into());
    cfg.topic.threshold = Some(0.5);
    cfg.topic.bucket_edges = vec![0.5, 0.7, 0.8, 0.9, 0.95, 1.0];
    cfg.train.epochs = 20;
    cfg.train.hidden_dims = vec![16, 16, 8];
    cfg
}

/// Runs the pipeline on the fixture corpus and initialises a data directory from it.
pub fn data_dir(root: &Path) -> ServiceConfig {
    let corpus_path = root.join("corpus.jsonl");
    std::fs::write(&corpus_path, write_corpus(&corpus())).unwrap();
    let run = root.join("run");
    run_pipeline(&run_config(&corpus_path, &run)).unwrap();
    let data = root.join("data");
    bootstrap_from_run(&data, &run).unwrap();
    ServiceConfig {
        k: 5,
        calibration_sample_size: 4,
        ..ServiceConfig::with_data_dir(data)
    }
}

pub fn open(root: &Path) -> Service {
    Service::open(data_dir(root)).unwrap()
}

pub const QUEUE: &str = "t-v1";
