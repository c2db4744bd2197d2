//! In-process review service. Every HTTP endpoint delegates to a method here.
//!
//! Data directory layout:
//!
//! ```text
//! corpus.jsonl               pages with reduced embeddings (read-only)
//! topics/<topic>.json        topic models
//! models/registry.json       version list and active version per topic
//! models/v<N>.redd           model files
//! queues/<queue>.json        frozen review queues
//! calibration/<topic>.json   calibration sessions
//! decisions.log              append-only decision log
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use redd_core::corpus::{load_corpus, write_corpus, Corpus, PageRecord, Split};
use redd_core::eval::MetricsDoc;
use redd_core::pipeline::held_out_metrics;
use redd_core::redd::{predict_pages, train, ReddModel, TrainConfig};
use redd_core::topic::{
    bucket_report, filter_on_topic, score_pages, select_threshold, BucketReport, TopicModel,
};
use redd_core::triage::{
    aggregate_domains, build_queue, evaluate_queue, latest_verdicts, merge_decisions, DecisionLog,
    NewDecision, PageScore, QueueMeta, ReviewDecision, ReviewQueue, Verdict,
};
use redd_core::util::write_atomic;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::ServiceError;

type Result<T, E = ServiceError> = std::result::Result<T, E>;

const REGISTRY_FILE: &str = "models/registry.json";
const LOG_FILE: &str = "decisions.log";
const CORPUS_FILE: &str = "corpus.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub version: u64,
    pub topic_id: String,
    /// Relative to the data directory.
    pub file: String,
    /// Highest decision id folded into this version's training labels.
    pub trained_through: u64,
    pub parent: Option<u64>,
    pub n_train: usize,
    pub queue_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub versions: Vec<ModelEntry>,
    /// topic_id → active version.
    pub active: BTreeMap<String, u64>,
}

impl Registry {
    fn validate(&self) -> Result<()> {
        for w in self.versions.windows(2) {
            if w[1].version <= w[0].version {
                return Err(ServiceError::Invalid(format!(
                    "registry versions not strictly increasing at {}",
                    w[1].version
                )));
            }
        }
        for (topic, v) in &self.active {
            match self.entry(*v) {
                Some(e) if &e.topic_id == topic => {}
                _ => {
                    return Err(ServiceError::Invalid(format!(
                        "active version {v} of topic `{topic}` is not registered for it"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, version: u64) -> Option<&ModelEntry> {
        self.versions.iter().find(|e| e.version == version)
    }

    pub fn next_version(&self) -> u64 {
        self.versions.last().map_or(1, |e| e.version + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSession {
    pub topic_id: String,
    /// Relevance fractions are recomputed from `marks` after every mark.
    pub report: BucketReport,
    /// page_id → relevant.
    pub marks: BTreeMap<String, bool>,
    pub frozen: bool,
    pub threshold: Option<f64>,
}

impl CalibrationSession {
    fn recompute(&mut self) {
        for b in &mut self.report.buckets {
            let marked: Vec<bool> = b
                .sample
                .iter()
                .filter_map(|id| self.marks.get(id).copied())
                .collect();
            b.relevance = if marked.is_empty() {
                None
            } else {
                Some(marked.iter().filter(|&&r| r).count() as f64 / marked.len() as f64)
            };
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenCalibration {
    pub bucket_edges: Option<Vec<f64>>,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceMark {
    pub bucket: usize,
    pub page_id: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub domain: String,
    pub verdict: String,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReceipt {
    pub decision: ReviewDecision,
    /// False when an idempotency key matched an earlier decision.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePage {
    pub page_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueRow {
    pub rank: usize,
    pub domain: String,
    pub mean_score: f64,
    pub page_count: usize,
    pub score_std: f64,
    /// "pending" or the latest verdict.
    pub status: String,
    pub decision_id: Option<u64>,
    pub samples: Vec<SamplePage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub queue_id: String,
    pub topic_id: String,
    pub model_version: u64,
    pub cutoff: usize,
    pub total_ranked: usize,
    pub len: usize,
    pub first: usize,
    pub last: usize,
    pub rows: Vec<QueueRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainRequest {
    pub topic_id: String,
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub topic_id: String,
    pub version: u64,
    pub parent: Option<u64>,
    pub queue_id: String,
    pub n_train: usize,
    pub trained_through: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrainState {
    #[default]
    Idle,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrainStatus {
    pub state: RetrainState,
    pub topic_id: Option<String>,
    pub version: Option<u64>,
    pub message: Option<String>,
}

/// Everything a restart must reproduce, for comparing two service instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSnapshot {
    pub decisions: Vec<ReviewDecision>,
    pub queues: Vec<QueuePage>,
    pub registry: Registry,
    pub topics: BTreeMap<String, TopicModel>,
    pub calibrations: BTreeMap<String, CalibrationSession>,
}

#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

struct Inner {
    cfg: ServiceConfig,
    corpus: Corpus,
    /// domain → page indices, by page id.
    domain_pages: HashMap<String, Vec<usize>>,
    topics: RwLock<BTreeMap<String, TopicModel>>,
    registry: RwLock<Registry>,
    models: RwLock<BTreeMap<u64, Arc<ReddModel>>>,
    queues: RwLock<BTreeMap<String, Arc<ReviewQueue>>>,
    log: Mutex<DecisionLog>,
    decisions: RwLock<Vec<ReviewDecision>>,
    calibrations: Mutex<BTreeMap<String, CalibrationSession>>,
    retrain_lock: Mutex<()>,
    retrain_status: RwLock<RetrainStatus>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("state serializes");
    write_atomic(path, text.as_bytes()).map_err(|e| ServiceError::Unavailable(e.to_string()))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(ServiceError::Invalid(format!("{}: {e}", dir.display()))),
    };
    for entry in entries {
        let path = entry
            .map_err(|e| ServiceError::Invalid(e.to_string()))?
            .path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_stem_ok(id: &str) -> Result<()> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        || id.starts_with('.')
    {
        return Err(ServiceError::Invalid(format!(
            "id `{id}` must be non-empty [A-Za-z0-9._-]"
        )));
    }
    Ok(())
}

/// Writes a fresh data directory from in-memory artifacts.
pub fn bootstrap(
    data_dir: &Path,
    corpus: &Corpus,
    topic: &TopicModel,
    model: &ReddModel,
    queue: Option<&ReviewQueue>,
) -> Result<()> {
    if data_dir.join(REGISTRY_FILE).exists() {
        return Err(ServiceError::Conflict(format!(
            "{} is already initialised",
            data_dir.display()
        )));
    }
    file_stem_ok(&topic.topic_id)?;
    if let Some(q) = queue {
        file_stem_ok(&q.queue_id)?;
        if q.model_version != model.version || q.topic_id != topic.topic_id {
            return Err(ServiceError::Invalid(
                "queue does not belong to the given topic and model".into(),
            ));
        }
    }
    let io = |e: redd_core::Error| ServiceError::Core(e);
    write_atomic(&data_dir.join(CORPUS_FILE), write_corpus(corpus).as_bytes()).map_err(io)?;
    write_atomic(
        &data_dir.join(format!("topics/{}.json", topic.topic_id)),
        topic.to_json().as_bytes(),
    )
    .map_err(io)?;
    let file = format!("models/v{}.redd", model.version);
    model.save(&data_dir.join(&file)).map_err(io)?;
    if let Some(q) = queue {
        write_atomic(
            &data_dir.join(format!("queues/{}.json", q.queue_id)),
            q.to_json().as_bytes(),
        )
        .map_err(io)?;
    }
    let registry = Registry {
        versions: vec![ModelEntry {
            version: model.version,
            topic_id: topic.topic_id.clone(),
            file,
            trained_through: 0,
            parent: None,
            n_train: model.training.as_ref().map_or(0, |t| t.n_train),
            queue_id: queue.map(|q| q.queue_id.clone()),
        }],
        active: BTreeMap::from([(topic.topic_id.clone(), model.version)]),
    };
    write_json(&data_dir.join(REGISTRY_FILE), &registry)
}

/// Initialises a data directory from a pipeline output directory.
pub fn bootstrap_from_run(data_dir: &Path, run_dir: &Path) -> Result<()> {
    let corpus = load_corpus(&run_dir.join("corpus.jsonl"))?;
    let topic = TopicModel::load(&run_dir.join("topic.json"))?;
    let model = ReddModel::load(&run_dir.join("model.redd"))?;
    let queue_path = run_dir.join("queue.json");
    let queue = if queue_path.is_file() {
        let text = std::fs::read_to_string(&queue_path)
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        Some(ReviewQueue::from_json(&text)?)
    } else {
        None
    };
    bootstrap(data_dir, &corpus, &topic, &model, queue.as_ref())
}

impl Service {
    /// Loads all state from `cfg.data_dir` and replays the decision log.
    pub fn open(cfg: ServiceConfig) -> Result<Service> {
        cfg.validate()?;
        let dir = cfg.data_dir.clone();
        let corpus = load_corpus(&dir.join(CORPUS_FILE))?;
        let mut domain_pages: HashMap<String, Vec<usize>> = HashMap::new();
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.sort_by(|&a, &b| {
            corpus.records()[a]
                .page_id
                .cmp(&corpus.records()[b].page_id)
        });
        for i in order {
            domain_pages
                .entry(corpus.records()[i].domain.clone())
                .or_default()
                .push(i);
        }

        let mut topics = BTreeMap::new();
        for path in json_files(&dir.join("topics"))? {
            let t = TopicModel::load(&path)?;
            topics.insert(t.topic_id.clone(), t);
        }

        let registry: Registry = if dir.join(REGISTRY_FILE).is_file() {
            read_json(&dir.join(REGISTRY_FILE))?
        } else {
            Registry::default()
        };
        registry.validate()?;
        let mut models = BTreeMap::new();
        for e in &registry.versions {
            let m = ReddModel::load(&dir.join(&e.file))?;
            if m.version != e.version {
                return Err(ServiceError::Invalid(format!(
                    "{} holds version {}, registry says {}",
                    e.file, m.version, e.version
                )));
            }
            models.insert(e.version, Arc::new(m));
        }

        let mut queues = BTreeMap::new();
        for path in json_files(&dir.join("queues"))? {
            let text =
                std::fs::read_to_string(&path).map_err(|e| ServiceError::Invalid(e.to_string()))?;
            let q = ReviewQueue::from_json(&text)?;
            if registry.entry(q.model_version).is_none() {
                return Err(ServiceError::Invalid(format!(
                    "queue `{}` references unknown model version {}",
                    q.queue_id, q.model_version
                )));
            }
            queues.insert(q.queue_id.clone(), Arc::new(q));
        }

        let mut calibrations = BTreeMap::new();
        for path in json_files(&dir.join("calibration"))? {
            let s: CalibrationSession = read_json(&path)?;
            calibrations.insert(s.topic_id.clone(), s);
        }

        let (log, recovery) = DecisionLog::open(dir.join(LOG_FILE))?;
        if recovery.truncated_bytes > 0 {
            tracing::warn!(
                bytes = recovery.truncated_bytes,
                "decision log tail repaired on startup"
            );
        }
        let decisions = log.decisions().to_vec();
        tracing::info!(
            decisions = decisions.len(),
            queues = queues.len(),
            versions = registry.versions.len(),
            "service state loaded"
        );
        Ok(Service {
            inner: Arc::new(Inner {
                cfg,
                corpus,
                domain_pages,
                topics: RwLock::new(topics),
                registry: RwLock::new(registry),
                models: RwLock::new(models),
                queues: RwLock::new(queues),
                log: Mutex::new(log),
                decisions: RwLock::new(decisions),
                calibrations: Mutex::new(calibrations),
                retrain_lock: Mutex::new(()),
                retrain_status: RwLock::new(RetrainStatus::default()),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.cfg
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.inner.cfg.data_dir.join(rel)
    }

    pub fn queue(&self, queue_id: &str) -> Result<Arc<ReviewQueue>> {
        self.inner
            .queues
            .read()
            .get(queue_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("queue `{queue_id}`")))
    }

    pub fn queue_ids(&self) -> Vec<String> {
        self.inner.queues.read().keys().cloned().collect()
    }

    pub fn topic(&self, topic_id: &str) -> Result<TopicModel> {
        self.inner
            .topics
            .read()
            .get(topic_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("topic `{topic_id}`")))
    }

    pub fn registry(&self) -> Registry {
        self.inner.registry.read().clone()
    }

    pub fn model(&self, version: u64) -> Result<Arc<ReddModel>> {
        self.inner
            .models
            .read()
            .get(&version)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("model version {version}")))
    }

    pub fn decisions(&self) -> Vec<ReviewDecision> {
        self.inner.decisions.read().clone()
    }

    pub fn corpus(&self) -> &Corpus {
        &self.inner.corpus
    }

    /// Rows `first..=last` (1-based, clipped to the queue) with their review status.
    pub fn get_queue(&self, queue_id: &str, range: Option<(usize, usize)>) -> Result<QueuePage> {
        let queue = self.queue(queue_id)?;
        let (first, last) = range.unwrap_or((1, queue.len().max(1)));
        if first == 0 || last < first {
            return Err(ServiceError::Invalid(format!(
                "bad rank range [{first}, {last}]"
            )));
        }
        let decisions = self.inner.decisions.read();
        let latest = latest_verdicts(&decisions, queue_id);
        let records = self.inner.corpus.records();
        let rows = queue
            .rows(first, last)
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let decision = latest.get(d.domain.as_str());
                let samples = self
                    .inner
                    .domain_pages
                    .get(&d.domain)
                    .map(|idx| {
                        idx.iter()
                            .take(self.inner.cfg.sample_pages)
                            .map(|&j| SamplePage {
                                page_id: records[j].page_id.clone(),
                                text: records[j].text.clone(),
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                QueueRow {
                    rank: first + i,
                    domain: d.domain.clone(),
                    mean_score: d.mean_score,
                    page_count: d.page_count,
                    score_std: d.score_std,
                    status: decision
                        .map_or_else(|| "pending".to_string(), |d| d.verdict.as_str().to_string()),
                    decision_id: decision.map(|d| d.decision_id),
                    samples,
                }
            })
            .collect::<Vec<_>>();
        Ok(QueuePage {
            queue_id: queue.queue_id.clone(),
            topic_id: queue.topic_id.clone(),
            model_version: queue.model_version,
            cutoff: queue.cutoff,
            total_ranked: queue.total_ranked,
            len: queue.len(),
            first,
            last: if rows.is_empty() {
                first - 1
            } else {
                first + rows.len() - 1
            },
            rows,
        })
    }

    pub fn queue_decisions(&self, queue_id: &str) -> Result<Vec<ReviewDecision>> {
        self.queue(queue_id)?;
        Ok(self
            .inner
            .decisions
            .read()
            .iter()
            .filter(|d| d.queue_id == queue_id)
            .cloned()
            .collect())
    }

    /// Appends a decision to the log and fsyncs it before returning.
    pub fn post_decision(
        &self,
        queue_id: &str,
        req: DecisionRequest,
        reviewer_id: &str,
    ) -> Result<DecisionReceipt> {
        let queue = self.queue(queue_id)?;
        let verdict: Verdict = req
            .verdict
            .parse()
            .map_err(|e: redd_core::Error| ServiceError::Invalid(e.to_string()))?;
        if queue.rank_of(&req.domain).is_none() {
            return Err(ServiceError::Invalid(format!(
                "domain `{}` is not in queue `{queue_id}`",
                req.domain
            )));
        }
        if reviewer_id.is_empty() {
            return Err(ServiceError::Unauthorized("missing reviewer".into()));
        }
        let mut log = self
            .inner
            .log
            .try_lock_for(self.inner.cfg.write_timeout())
            .ok_or_else(|| ServiceError::Unavailable("decision log busy; retry".into()))?;
        let (decision, created) = log
            .append(NewDecision {
                queue_id: queue_id.to_string(),
                domain: req.domain,
                verdict,
                reviewer_id: reviewer_id.to_string(),
                timestamp: now(),
                note: req.note,
                idempotency_key: req.idempotency_key,
            })
            .map_err(|e| ServiceError::Unavailable(format!("decision not recorded: {e}")))?;
        if created {
            self.inner.decisions.write().push(decision.clone());
        }
        Ok(DecisionReceipt { decision, created })
    }

    pub fn get_calibration(&self, topic_id: &str) -> Result<CalibrationSession> {
        self.inner
            .calibrations
            .lock()
            .get(topic_id)
            .cloned()
            .ok_or_else(|| {
                ServiceError::NotFound(format!("no calibration session for topic `{topic_id}`"))
            })
    }

    fn calibrations(
        &self,
    ) -> Result<parking_lot::MutexGuard<'_, BTreeMap<String, CalibrationSession>>> {
        self.inner
            .calibrations
            .try_lock_for(self.inner.cfg.write_timeout())
            .ok_or_else(|| ServiceError::Unavailable("calibration session busy; retry".into()))
    }

    fn save_session(&self, s: &CalibrationSession) -> Result<()> {
        write_json(&self.path(format!("calibration/{}.json", s.topic_id)), s)
    }

    /// Samples every bucket of the topic's similarity histogram. An open, unfrozen
    /// session is returned as is.
    pub fn open_calibration(
        &self,
        topic_id: &str,
        req: OpenCalibration,
    ) -> Result<CalibrationSession> {
        let topic = self.topic(topic_id)?;
        let mut sessions = self.calibrations()?;
        if let Some(s) = sessions.get(topic_id) {
            if s.frozen {
                return Err(ServiceError::Conflict(format!(
                    "calibration of `{topic_id}` is frozen"
                )));
            }
            return Ok(s.clone());
        }
        let edges = req
            .bucket_edges
            .unwrap_or_else(|| self.inner.cfg.bucket_edges.clone());
        let topic = topic.with_edges(edges)?;
        let pages: Vec<PageRecord> = self
            .inner
            .corpus
            .records()
            .iter()
            .filter(|p| p.embedding_reduced.is_some())
            .cloned()
            .collect();
        let scored = score_pages(&topic, &pages)?;
        let report = bucket_report(
            &topic,
            &scored,
            req.sample_size
                .unwrap_or(self.inner.cfg.calibration_sample_size),
            req.seed.unwrap_or(self.inner.cfg.seed),
        )?;
        let session = CalibrationSession {
            topic_id: topic_id.to_string(),
            report,
            marks: BTreeMap::new(),
            frozen: false,
            threshold: None,
        };
        self.save_session(&session)?;
        sessions.insert(topic_id.to_string(), session.clone());
        Ok(session)
    }

    pub fn post_relevance_mark(
        &self,
        topic_id: &str,
        mark: RelevanceMark,
    ) -> Result<CalibrationSession> {
        let mut sessions = self.calibrations()?;
        let session = sessions.get_mut(topic_id).ok_or_else(|| {
            ServiceError::NotFound(format!("no calibration session for topic `{topic_id}`"))
        })?;
        if session.frozen {
            return Err(ServiceError::Conflict(format!(
                "calibration of `{topic_id}` is frozen"
            )));
        }
        let bucket = session.report.buckets.get(mark.bucket).ok_or_else(|| {
            ServiceError::Invalid(format!("bucket {} does not exist", mark.bucket))
        })?;
        if !bucket.sample.contains(&mark.page_id) {
            return Err(ServiceError::Invalid(format!(
                "page `{}` is not in the sample of bucket {}",
                mark.page_id, mark.bucket
            )));
        }
        let mut updated = session.clone();
        updated.marks.insert(mark.page_id, mark.relevant);
        updated.recompute();
        self.save_session(&updated)?;
        *session = updated.clone();
        Ok(updated)
    }

    /// Selects the threshold from the current fractions, sets it on the topic and
    /// freezes the session.
    pub fn confirm_calibration(&self, topic_id: &str) -> Result<CalibrationSession> {
        let mut sessions = self.calibrations()?;
        let session = sessions.get_mut(topic_id).ok_or_else(|| {
            ServiceError::NotFound(format!("no calibration session for topic `{topic_id}`"))
        })?;
        if session.frozen {
            return Err(ServiceError::Conflict(format!(
                "calibration of `{topic_id}` is already frozen"
            )));
        }
        let threshold = select_threshold(&session.report)?;
        let edges: Vec<f64> = session
            .report
            .buckets
            .iter()
            .map(|b| b.lower)
            .chain(session.report.buckets.last().map(|b| b.upper))
            .collect();
        let mut topic = self.topic(topic_id)?.with_edges(edges)?;
        topic.set_threshold(threshold)?;
        let mut updated = session.clone();
        updated.frozen = true;
        updated.threshold = Some(threshold);
        write_atomic(
            &self.path(format!("topics/{topic_id}.json")),
            topic.to_json().as_bytes(),
        )
        .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        self.save_session(&updated)?;
        self.inner
            .topics
            .write()
            .insert(topic_id.to_string(), topic);
        *session = updated.clone();
        Ok(updated)
    }

    pub fn retrain_status(&self) -> RetrainStatus {
        self.inner.retrain_status.read().clone()
    }

    /// Folds decisions into labels, retrains on the topic-filtered train split,
    /// builds a new queue and atomically makes the new version active.
    pub fn post_retrain(&self, req: RetrainRequest) -> Result<RetrainOutcome> {
        let _guard = self
            .inner
            .retrain_lock
            .try_lock()
            .ok_or_else(|| ServiceError::Conflict("a retrain is already running".into()))?;
        *self.inner.retrain_status.write() = RetrainStatus {
            state: RetrainState::Running,
            topic_id: Some(req.topic_id.clone()),
            version: None,
            message: None,
        };
        let result = self.retrain_locked(&req);
        *self.inner.retrain_status.write() = match &result {
            Ok(o) => RetrainStatus {
                state: RetrainState::Succeeded,
                topic_id: Some(o.topic_id.clone()),
                version: Some(o.version),
                message: None,
            },
            Err(e) => RetrainStatus {
                state: RetrainState::Failed,
                topic_id: Some(req.topic_id.clone()),
                version: None,
                message: Some(e.to_string()),
            },
        };
        result
    }

    fn retrain_locked(&self, req: &RetrainRequest) -> Result<RetrainOutcome> {
        let topic = self.topic(&req.topic_id)?;
        if topic.threshold.is_none() {
            return Err(ServiceError::Invalid(format!(
                "topic `{}` has no threshold yet",
                topic.topic_id
            )));
        }
        let (parent, trained_through) = {
            let reg = self.inner.registry.read();
            let parent = reg.active.get(&topic.topic_id).copied();
            (
                parent,
                parent
                    .and_then(|v| reg.entry(v))
                    .map_or(0, |e| e.trained_through),
            )
        };
        let topic_queues: HashSet<String> = self
            .inner
            .queues
            .read()
            .values()
            .filter(|q| q.topic_id == topic.topic_id)
            .map(|q| q.queue_id.clone())
            .collect();
        let decisions: Vec<ReviewDecision> = self
            .inner
            .decisions
            .read()
            .iter()
            .filter(|d| topic_queues.contains(&d.queue_id))
            .cloned()
            .collect();
        let last_id = decisions.iter().map(|d| d.decision_id).max().unwrap_or(0);
        if last_id <= trained_through {
            return Err(ServiceError::NoNewLabels(format!(
                "no decisions on topic `{}` since decision {trained_through}",
                topic.topic_id
            )));
        }
        let train_cfg = match &req.train {
            Some(c) => c.clone(),
            None => self.inner.cfg.default_train_config()?,
        };
        train_cfg.validate()?;

        let corpus = &self.inner.corpus;
        let scope: HashSet<String> = filter_on_topic(&topic, corpus.records())?
            .into_iter()
            .map(|p| p.page_id)
            .collect();
        let merged = merge_decisions(
            corpus,
            &decisions,
            &self.inner.cfg.label_policy,
            Some(&scope),
        )?;
        let filtered: Vec<&PageRecord> = merged
            .corpus
            .records()
            .iter()
            .filter(|p| scope.contains(&p.page_id))
            .collect();
        let train_pages: Vec<&PageRecord> = filtered
            .iter()
            .copied()
            .filter(|p| p.split == Split::Train && p.label.is_some())
            .collect();
        let mut model = train(&train_pages, &train_cfg)?;
        let version = self.inner.registry.read().next_version();
        model.version = version;

        let scores = predict_pages(&model, filtered.iter().copied())?;
        let page_scores: Vec<PageScore> = filtered
            .iter()
            .zip(&scores)
            .map(|(p, (_, s))| PageScore {
                page_id: p.page_id.clone(),
                domain: p.domain.clone(),
                score: *s,
            })
            .collect();
        let agg = aggregate_domains(&page_scores, self.inner.cfg.min_pages, version)?;
        let queue_id = format!("{}-v{version}", topic.topic_id);
        let queue = build_queue(
            &agg.domains,
            self.inner.cfg.cutoff,
            QueueMeta {
                queue_id: queue_id.clone(),
                topic_id: topic.topic_id.clone(),
                model_version: version,
                created_at: now(),
            },
        )?;

        let entry = ModelEntry {
            version,
            topic_id: topic.topic_id.clone(),
            file: format!("models/v{version}.redd"),
            trained_through: last_id,
            parent,
            n_train: train_pages.len(),
            queue_id: Some(queue_id.clone()),
        };
        model.save(&self.path(&entry.file))?;
        write_atomic(
            &self.path(format!("queues/{queue_id}.json")),
            queue.to_json().as_bytes(),
        )?;
        let mut registry = self.inner.registry.read().clone();
        registry.versions.push(entry.clone());
        registry.active.insert(topic.topic_id.clone(), version);
        // The registry write is the commit point.
        write_json(&self.path(REGISTRY_FILE), &registry)?;

        self.inner.models.write().insert(version, Arc::new(model));
        self.inner
            .queues
            .write()
            .insert(queue_id.clone(), Arc::new(queue));
        *self.inner.registry.write() = registry;
        tracing::info!(topic = %topic.topic_id, version, n_train = entry.n_train, "retrained");
        Ok(RetrainOutcome {
            topic_id: topic.topic_id.clone(),
            version,
            parent,
            queue_id,
            n_train: entry.n_train,
            trained_through: last_id,
        })
    }

    /// Scores of `version` on the pages `topic_id` keeps, in corpus order.
    pub fn topic_scores(
        &self,
        version: u64,
        topic_id: &str,
    ) -> Result<(Vec<PageRecord>, Vec<(String, f64)>)> {
        let model = self.model(version)?;
        let topic = self.topic(topic_id)?;
        let filtered = filter_on_topic(&topic, self.inner.corpus.records())?;
        let scores = predict_pages(&model, filtered.iter())?;
        Ok((filtered, scores))
    }

    /// Held-out AUC and language table of `version` on the topic's pages, plus
    /// precision@k of every closed queue bound to that version. A queue is closed
    /// once each of its top-k domains has a verdict.
    pub fn get_metrics(&self, version: u64, topic_id: &str) -> Result<MetricsDoc> {
        if self.inner.registry.read().entry(version).is_none() {
            return Err(ServiceError::NotFound(format!("model version {version}")));
        }
        let (filtered, scores) = self.topic_scores(version, topic_id)?;
        let mut doc = held_out_metrics(&filtered, &scores)?;
        doc.insert("model.version".into(), version as f64);
        let decisions = self.inner.decisions.read();
        let queues: Vec<Arc<ReviewQueue>> = self
            .inner
            .queues
            .read()
            .values()
            .filter(|q| q.model_version == version && q.topic_id == topic_id)
            .cloned()
            .collect();
        for q in queues {
            if q.is_empty() {
                continue;
            }
            let k = self.inner.cfg.k.min(q.len());
            let latest = latest_verdicts(&decisions, &q.queue_id);
            if !q.entries[..k]
                .iter()
                .all(|d| latest.contains_key(d.domain.as_str()))
            {
                continue;
            }
            let ev = evaluate_queue(&q, &decisions, k, self.inner.cfg.histogram_bin)?;
            doc.insert(format!("queue.{}.k", q.queue_id), k as f64);
            doc.insert(
                format!("queue.{}.precision_at_k", q.queue_id),
                ev.precision_at_k,
            );
            doc.insert(format!("queue.{}.baseline", q.queue_id), ev.baseline);
        }
        Ok(doc)
    }

    pub fn snapshot(&self) -> Result<StateSnapshot> {
        let mut queues = Vec::new();
        for id in self.queue_ids() {
            queues.push(self.get_queue(&id, None)?);
        }
        Ok(StateSnapshot {
            decisions: self.decisions(),
            queues,
            registry: self.registry(),
            topics: self.inner.topics.read().clone(),
            calibrations: self.inner.calibrations.lock().clone(),
        })
    }
}
