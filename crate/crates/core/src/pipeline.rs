//! End-to-end run: project, topic filter, train, predict, aggregate, queue.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, write_corpus, Corpus, Label, PageRecord, Split, SyntheticSpec};
use crate::embed::make_projection;
use crate::error::{Error, Result};
use crate::eval::fixtures;
use crate::eval::{auc_roc, experiments, language_score_table, LanguageScored, MetricsDoc};
use crate::redd::{predict_pages, train, ReddModel, TrainConfig};
use crate::topic::{build_topic, calibrate_with_categories, filter_on_topic, TopicModel};
use crate::triage::{
    aggregate_domains_with, build_queue, evaluate_queue, merge_decisions, Aggregation, DecisionLog,
    LabelPolicy, PageScore, QueueMeta, DEFAULT_CUTOFF, DEFAULT_K,
};
use crate::util::{derive_seed, sha256_hex, write_atomic, GENERATOR_NAME};

/// Where the pipeline gets its pages. Exactly one of the two must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Generate a synthetic corpus from this spec with the run seed.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicSection {
    pub id: String,
    /// Existing topic file; when set, building and calibration are skipped.
    pub path: Option<PathBuf>,
    /// Category used to pick example pages and to simulate relevance marks.
    pub category: Option<String>,
    /// Explicit example page ids; overrides sampling by category.
    pub examples: Vec<String>,
    pub n_examples: usize,
    pub sample_size: usize,
    pub bucket_edges: Vec<f64>,
    /// Fixed threshold; skips simulated calibration.
    pub threshold: Option<f64>,
}

impl Default for TopicSection {
    fn default() -> Self {
        TopicSection {
            id: "topic".into(),
            path: None,
            category: None,
            examples: Vec::new(),
            n_examples: 20,
            sample_size: 20,
            bucket_edges: crate::topic::DEFAULT_BUCKET_EDGES.to_vec(),
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriageSection {
    pub cutoff: usize,
    pub k: usize,
    pub min_pages: usize,
    pub aggregation: Aggregation,
    pub histogram_bin: usize,
}

impl Default for TriageSection {
    fn default() -> Self {
        TriageSection {
            cutoff: DEFAULT_CUTOFF,
            k: DEFAULT_K,
            min_pages: 1,
            aggregation: Aggregation::Mean,
            histogram_bin: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub corpus: CorpusSource,
    pub output_dir: PathBuf,
    /// Pre-trained model; when set, training is skipped.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Decisions folded into labels before training.
    #[serde(default)]
    pub decision_log: Option<PathBuf>,
    #[serde(default = "default_d_red")]
    pub d_red: usize,
    /// Defaults to a seed derived from `seed`.
    #[serde(default)]
    pub projection_seed: Option<u64>,
    /// Defaults to a seed derived from `seed`; overrides `train.seed`.
    #[serde(default)]
    pub train_seed: Option<u64>,
    #[serde(default)]
    pub topic: TopicSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub triage: TriageSection,
    #[serde(default)]
    pub label_policy: LabelPolicy,
    /// Stamped on the topic and queue instead of wall-clock time, keeping reports reproducible.
    #[serde(default)]
    pub created_at: u64,
}

fn default_seed() -> u64 {
    7
}
fn default_d_red() -> usize {
    crate::corpus::DEFAULT_D_RED
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl PipelineConfig {
    /// The synthetic topic-filter fixture with simulated calibration.
    pub fn synthetic_default(output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            seed: default_seed(),
            corpus: CorpusSource {
                path: None,
                synthetic: Some(fixtures::ablation_spec()),
            },
            output_dir: output_dir.into(),
            model: None,
            decision_log: None,
            d_red: 100,
            projection_seed: None,
            train_seed: None,
            topic: TopicSection {
                id: fixtures::ABLATION_TOPIC.into(),
                category: Some(fixtures::ABLATION_TOPIC.into()),
                bucket_edges: fixtures::fine_bucket_edges(),
                ..TopicSection::default()
            },
            train: TrainConfig::default(),
            triage: TriageSection::default(),
            label_policy: LabelPolicy::default(),
            created_at: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err("<file>", e.to_string()))
    }

    /// Parses a config file; relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [
            self.corpus.path.as_mut(),
            self.model.as_mut(),
            self.decision_log.as_mut(),
            self.topic.path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "corpus",
                    "set either `path` or `synthetic`, not both",
                ))
            }
            (None, None) => return Err(config_err("corpus.path", "missing corpus path")),
            (Some(p), None) if !p.is_file() => {
                return Err(config_err(
                    "corpus.path",
                    format!("{} does not exist", p.display()),
                ))
            }
            (None, Some(spec)) => spec
                .validate()
                .map_err(|e| config_err("corpus.synthetic", e.to_string()))?,
            _ => {}
        }
        for (field, path) in [
            ("model", &self.model),
            ("decision_log", &self.decision_log),
            ("topic.path", &self.topic.path),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(config_err(field, format!("{} does not exist", p.display())));
                }
            }
        }
        if self.d_red == 0 {
            return Err(config_err("d_red", "must be positive"));
        }
        if let Some(spec) = &self.corpus.synthetic {
            if self.d_red > spec.d_full {
                return Err(config_err(
                    "d_red",
                    format!("exceeds corpus.synthetic.d_full ({})", spec.d_full),
                ));
            }
        }
        if self.topic.path.is_none() {
            if self.topic.threshold.is_none() && self.topic.category.is_none() {
                return Err(config_err(
                    "topic",
                    "need a topic file, a threshold, or a category to calibrate with",
                ));
            }
            if self.topic.examples.is_empty() && self.topic.category.is_none() {
                return Err(config_err(
                    "topic.examples",
                    "need example page ids or a category",
                ));
            }
            if self.topic.n_examples == 0 || self.topic.sample_size == 0 {
                return Err(config_err(
                    "topic",
                    "n_examples and sample_size must be positive",
                ));
            }
        }
        if self.triage.cutoff == 0 {
            return Err(config_err("triage.cutoff", "must be at least 1"));
        }
        if self.triage.k == 0 || self.triage.k > self.triage.cutoff {
            return Err(config_err("triage.k", "must lie in 1..=cutoff"));
        }
        if self.triage.min_pages == 0 || self.triage.histogram_bin == 0 {
            return Err(config_err(
                "triage",
                "min_pages and histogram_bin must be positive",
            ));
        }
        self.train
            .validate()
            .map_err(|e| config_err("train", e.to_string()))
    }

    fn projection_seed(&self) -> u64 {
        self.projection_seed
            .unwrap_or_else(|| derive_seed(self.seed, b"projection"))
    }

    fn bucket_seed(&self) -> u64 {
        derive_seed(self.seed, b"buckets")
    }

    fn train_seed(&self) -> u64 {
        self.train_seed
            .unwrap_or_else(|| derive_seed(self.seed, b"train"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub generator: String,
    pub config_sha256: String,
    pub stages: Vec<String>,
    pub metrics: MetricsDoc,
    /// Keyed by artifact name; file names are relative to the output directory.
    pub artifacts: BTreeMap<String, ArtifactDigest>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const REPORT_FILE: &str = "run_report.json";

/// One line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub page_id: String,
    #[serde(default)]
    pub domain: String,
    pub score: f64,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default = "unassigned")]
    pub split: String,
}

fn unassigned() -> String {
    Split::Unassigned.as_str().into()
}

impl ScoreRecord {
    pub fn split(&self) -> Result<Split> {
        self.split.parse()
    }
}

pub fn write_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("score line"));
        out.push('\n');
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            line: i + 1,
            message,
        };
        let r: ScoreRecord = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        r.split().map_err(|e| malformed(e.to_string()))?;
        if !r.score.is_finite() {
            return Err(malformed(format!("score of `{}` is not finite", r.page_id)));
        }
        out.push(r);
    }
    Ok(out)
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    stages: Vec<String>,
    artifacts: BTreeMap<String, ArtifactDigest>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, file: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.cfg.output_dir.join(file), bytes)?;
        self.artifacts.insert(
            name.into(),
            ArtifactDigest {
                file: file.into(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    fn stage<T>(
        &mut self,
        stage: &'static str,
        f: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<T> {
        tracing::info!(stage, "pipeline stage");
        let out = f(self).map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })?;
        self.stages.push(stage.into());
        Ok(out)
    }
}

fn labeled<'a>(pages: &'a [PageRecord], split: Split) -> Vec<&'a PageRecord> {
    pages
        .iter()
        .filter(|p| p.split == split && p.label.is_some())
        .collect()
}

/// Runs every stage, writing artifacts into `cfg.output_dir`. Stops at the first
/// failing stage; artifacts of earlier stages stay on disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        stages: Vec::new(),
        artifacts: BTreeMap::new(),
    };
    let mut metrics = MetricsDoc::new();

    let corpus = run.stage("load", |_| {
        match (&cfg.corpus.path, &cfg.corpus.synthetic) {
            (Some(path), _) => load_corpus(path),
            (None, Some(spec)) => {
                let records = crate::corpus::generate_synthetic_corpus(spec, cfg.seed)?;
                Corpus::new(spec.name.clone(), spec.d_full, cfg.d_red, records)
            }
            (None, None) => unreachable!("validated"),
        }
    })?;

    let corpus = run.stage("project", |run| {
        let records = corpus.records();
        if records.iter().all(|p| p.embedding_full.is_some()) {
            let d_full = corpus.manifest().d_full;
            if cfg.d_red > d_full {
                return Err(config_err(
                    "d_red",
                    format!("exceeds the corpus d_full ({d_full})"),
                ));
            }
            let projection = make_projection(d_full, cfg.d_red, cfg.projection_seed())?;
            run.write("projection", "projection.bin", &projection.to_bytes())?;
            projection.project_corpus(&corpus)
        } else if records.iter().all(|p| p.embedding_reduced.is_some()) {
            Ok(corpus.clone())
        } else {
            Err(Error::InvalidArgument(
                "corpus needs full embeddings on every page, or reduced embeddings on every page"
                    .into(),
            ))
        }
    })?;

    let topic = run.stage("topic", |run| {
        let topic = if let Some(path) = &cfg.topic.path {
            TopicModel::load(path)?
        } else {
            let examples = pick_examples(cfg, &corpus)?;
            let mut topic = build_topic(cfg.topic.id.clone(), &examples, cfg.created_at)?
                .with_edges(cfg.topic.bucket_edges.clone())?;
            if let Some(threshold) = cfg.topic.threshold {
                topic.set_threshold(threshold)?;
            } else {
                let category = cfg.topic.category.as_deref().expect("validated");
                let report = calibrate_with_categories(
                    &mut topic,
                    corpus.records(),
                    category,
                    cfg.topic.sample_size,
                    cfg.bucket_seed(),
                )?;
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                run.write("calibration", "calibration.json", json.as_bytes())?;
            }
            topic
        };
        if topic.threshold.is_none() {
            return Err(Error::ThresholdUnset(topic.topic_id.clone()));
        }
        topic.validate()?;
        run.write("topic", "topic.json", topic.to_json().as_bytes())?;
        Ok(topic)
    })?;
    metrics.insert("topic.threshold".into(), topic.threshold.expect("checked"));

    let (corpus, filtered) = run.stage("filter", |run| {
        let mut filtered = filter_on_topic(&topic, corpus.records())?;
        let mut corpus = corpus;
        if let Some(log) = &cfg.decision_log {
            let decisions = DecisionLog::read(log)?;
            let scope: HashSet<String> = filtered.iter().map(|p| p.page_id.clone()).collect();
            let merged = merge_decisions(&corpus, &decisions, &cfg.label_policy, Some(&scope))?;
            corpus = merged.corpus;
            let by_id: BTreeMap<&str, &PageRecord> = corpus
                .records()
                .iter()
                .map(|p| (p.page_id.as_str(), p))
                .collect();
            filtered = filtered
                .iter()
                .map(|p| by_id[p.page_id.as_str()].clone())
                .collect();
        }
        run.write("corpus", "corpus.jsonl", write_corpus(&corpus).as_bytes())?;
        Ok((corpus, filtered))
    })?;
    metrics.insert("topic.n_filtered".into(), filtered.len() as f64);
    metrics.insert("corpus.n_records".into(), corpus.len() as f64);

    let model = run.stage("train", |run| {
        let model = if let Some(path) = &cfg.model {
            ReddModel::load(path)?
        } else {
            let train_pages = labeled(&filtered, Split::Train);
            let train_cfg = TrainConfig {
                seed: cfg.train_seed(),
                ..cfg.train.clone()
            };
            train(&train_pages, &train_cfg)?
        };
        run.write("model", "model.redd", &model.to_bytes())?;
        Ok(model)
    })?;
    metrics.insert("model.version".into(), model.version as f64);
    if let Some(meta) = &model.training {
        metrics.insert("train.n_train".into(), meta.n_train as f64);
        metrics.insert("train.final_loss".into(), meta.final_train_loss);
        metrics.insert("train.initial_loss".into(), meta.initial_train_loss);
    }

    let scores = run.stage("predict", |run| {
        let scores = predict_pages(&model, filtered.iter())?;
        let records: Vec<ScoreRecord> = filtered
            .iter()
            .zip(&scores)
            .map(|(p, (_, s))| ScoreRecord {
                page_id: p.page_id.clone(),
                domain: p.domain.clone(),
                score: *s,
                label: p.label,
                split: p.split.as_str().into(),
            })
            .collect();
        run.write("scores", "scores.jsonl", write_scores(&records).as_bytes())?;
        Ok(scores)
    })?;

    metrics.extend(held_out_metrics(&filtered, &scores)?);

    let aggregated = run.stage("aggregate", |run| {
        let page_scores: Vec<PageScore> = filtered
            .iter()
            .zip(&scores)
            .map(|(p, (_, s))| PageScore {
                page_id: p.page_id.clone(),
                domain: p.domain.clone(),
                score: *s,
            })
            .collect();
        let agg = aggregate_domains_with(
            &page_scores,
            cfg.triage.min_pages,
            model.version,
            cfg.triage.aggregation,
        )?;
        run.write(
            "domains",
            "domains.json",
            serde_json::to_string_pretty(&agg).unwrap().as_bytes(),
        )?;
        Ok(agg)
    })?;
    metrics.insert("triage.n_domains".into(), aggregated.domains.len() as f64);
    metrics.insert(
        "triage.n_excluded_domains".into(),
        aggregated.excluded.len() as f64,
    );

    let queue = run.stage("queue", |run| {
        let queue = build_queue(
            &aggregated.domains,
            cfg.triage.cutoff,
            QueueMeta {
                queue_id: format!("{}-v{}", topic.topic_id, model.version),
                topic_id: topic.topic_id.clone(),
                model_version: model.version,
                created_at: cfg.created_at,
            },
        )?;
        run.write("queue", "queue.json", queue.to_json().as_bytes())?;
        Ok(queue)
    })?;
    metrics.insert("triage.queue_len".into(), queue.len() as f64);
    if let Some(log) = &cfg.decision_log {
        let decisions = DecisionLog::read(log)?;
        if decisions.iter().any(|d| d.queue_id == queue.queue_id) && cfg.triage.k <= queue.len() {
            let ev = evaluate_queue(&queue, &decisions, cfg.triage.k, cfg.triage.histogram_bin)
                .map_err(|e| Error::Stage {
                    stage: "evaluate",
                    source: Box::new(e),
                })?;
            metrics.insert("triage.precision_at_k".into(), ev.precision_at_k);
            metrics.insert("triage.baseline".into(), ev.baseline);
        }
    }

    let metrics_json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    run.write("metrics", "metrics.json", metrics_json.as_bytes())?;

    let report = RunReport {
        seed: cfg.seed,
        generator: GENERATOR_NAME.into(),
        config_sha256: config_digest(cfg),
        stages: run.stages,
        metrics,
        artifacts: run.artifacts,
    };
    write_atomic(
        &cfg.output_dir.join(REPORT_FILE),
        report.to_json().as_bytes(),
    )?;
    Ok(report)
}

/// Digest of the config with the output location blanked, so moving a run does not change it.
fn config_digest(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    sha256_hex(c.to_toml().as_bytes())
}

fn pick_examples<'a>(cfg: &PipelineConfig, corpus: &'a Corpus) -> Result<Vec<&'a PageRecord>> {
    if cfg.topic.examples.is_empty() {
        let category = cfg.topic.category.as_deref().expect("validated");
        return experiments::sample_examples(
            corpus,
            category,
            cfg.topic.n_examples,
            cfg.bucket_seed(),
        );
    }
    cfg.topic
        .examples
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .ok_or_else(|| config_err("topic.examples", format!("unknown page `{id}`")))
        })
        .collect()
}

/// Held-out AUC and language score table over the labeled test pages of `pages`.
/// `scores` are aligned with `pages`. The focus language is the most common one
/// among those test pages.
pub fn held_out_metrics(pages: &[PageRecord], scores: &[(String, f64)]) -> Result<MetricsDoc> {
    if pages.len() != scores.len() {
        return Err(Error::dims("scores vs pages", pages.len(), scores.len()));
    }
    let test: Vec<(&PageRecord, f64)> = pages
        .iter()
        .zip(scores)
        .filter(|(p, _)| p.split == Split::Test && p.label.is_some())
        .map(|(p, (_, s))| (p, *s))
        .collect();
    let mut metrics = MetricsDoc::new();
    metrics.insert("test.n".into(), test.len() as f64);
    let s: Vec<f64> = test.iter().map(|t| t.1).collect();
    let y: Vec<bool> = test
        .iter()
        .map(|t| t.0.label == Some(Label::Disinformation))
        .collect();
    if let Ok(auc) = auc_roc(&s, &y) {
        metrics.insert("test.auc".into(), auc);
    }
    if let Some(focus) = majority_language(test.iter().map(|t| t.0)) {
        let rows: Vec<LanguageScored> = test
            .iter()
            .map(|(p, s)| LanguageScored {
                score: *s,
                label: p.label.expect("labeled"),
                language: p.language.clone(),
            })
            .collect();
        metrics.extend(language_score_table(&rows, &focus)?.to_metrics("test.langtable."));
    }
    Ok(metrics)
}

/// Most common language, ties by code.
pub fn majority_language<'a>(pages: impl Iterator<Item = &'a PageRecord>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pages {
        *counts.entry(p.language.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
}
