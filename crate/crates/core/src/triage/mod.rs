//! Domain aggregation, review queues, queue evaluation and the decision merge.

mod log;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label, PageRecord, Split};
use crate::error::{Error, Result};
use crate::eval::{precision_at_k, RankLevel, RankedList};

pub use log::{DecisionLog, LogRecovery, NewDecision};

/// Default queue length, matching the size of the manual review batch.
pub const DEFAULT_CUTOFF: usize = 300;
/// Default k for queue precision.
pub const DEFAULT_K: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageScore {
    pub page_id: String,
    pub domain: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain: String,
    /// Aggregated page score. The arithmetic mean unless another aggregation was requested.
    pub mean_score: f64,
    pub page_count: usize,
    /// Population standard deviation of the page scores.
    pub score_std: f64,
    pub model_version: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
    /// Mean after dropping `fraction` of the pages from each end.
    Trimmed {
        fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedDomain {
    pub domain: String,
    pub page_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregated {
    /// Included domains, by domain name.
    pub domains: Vec<DomainScore>,
    /// Domains below `min_pages`, by domain name.
    pub excluded: Vec<ExcludedDomain>,
}

pub fn aggregate_domains(
    scores: &[PageScore],
    min_pages: usize,
    model_version: u64,
) -> Result<Aggregated> {
    aggregate_domains_with(scores, min_pages, model_version, Aggregation::Mean)
}

pub fn aggregate_domains_with(
    scores: &[PageScore],
    min_pages: usize,
    model_version: u64,
    aggregation: Aggregation,
) -> Result<Aggregated> {
    if min_pages == 0 {
        return Err(Error::InvalidArgument(
            "min_pages must be at least 1".into(),
        ));
    }
    if let Aggregation::Trimmed { fraction } = aggregation {
        if !(0.0..0.5).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "trim fraction {fraction} not in [0, 0.5)"
            )));
        }
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in scores {
        if !(0.0..=1.0).contains(&s.score) {
            return Err(Error::InvalidArgument(format!(
                "score {} of page `{}` outside [0, 1]",
                s.score, s.page_id
            )));
        }
        groups.entry(s.domain.as_str()).or_default().push(s.score);
    }
    let mut out = Aggregated {
        domains: Vec::new(),
        excluded: Vec::new(),
    };
    for (domain, mut values) in groups {
        let n = values.len();
        if n < min_pages {
            out.excluded.push(ExcludedDomain {
                domain: domain.to_string(),
                page_count: n,
            });
            continue;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        values.sort_by(f64::total_cmp);
        let value = match aggregation {
            Aggregation::Mean => mean,
            Aggregation::Median if n % 2 == 1 => values[n / 2],
            Aggregation::Median => (values[n / 2 - 1] + values[n / 2]) / 2.0,
            Aggregation::Trimmed { fraction } => {
                let cut = (n as f64 * fraction).floor() as usize;
                let kept = &values[cut..n - cut];
                kept.iter().sum::<f64>() / kept.len() as f64
            }
        };
        // Summation order can push the mean a hair outside the observed range.
        let value = value.clamp(values[0], values[n - 1]);
        out.domains.push(DomainScore {
            domain: domain.to_string(),
            mean_score: value,
            page_count: n,
            score_std: var.sqrt(),
            model_version,
        });
    }
    Ok(out)
}

/// Descending score, ties by domain name.
pub fn rank_domains(domains: &[DomainScore]) -> Vec<DomainScore> {
    let mut ranked = domains.to_vec();
    ranked.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.domain.cmp(&b.domain))
    });
    ranked
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueMeta {
    pub queue_id: String,
    pub topic_id: String,
    pub model_version: u64,
    pub created_at: u64,
}

/// A frozen prefix of the domain ranking sent for review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueue {
    pub queue_id: String,
    pub topic_id: String,
    pub model_version: u64,
    pub cutoff: usize,
    pub created_at: u64,
    /// Size of the ranking the queue was cut from.
    pub total_ranked: usize,
    pub entries: Vec<DomainScore>,
}

pub fn build_queue(domains: &[DomainScore], cutoff: usize, meta: QueueMeta) -> Result<ReviewQueue> {
    if cutoff == 0 {
        return Err(Error::InvalidArgument(
            "queue cutoff must be at least 1".into(),
        ));
    }
    if let Some(d) = domains
        .iter()
        .find(|d| d.model_version != meta.model_version)
    {
        return Err(Error::InvalidArgument(format!(
            "domain `{}` scored by model version {}, queue is for version {}",
            d.domain, d.model_version, meta.model_version
        )));
    }
    let mut seen = HashSet::new();
    if let Some(d) = domains.iter().find(|d| !seen.insert(d.domain.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "domain `{}` listed twice",
            d.domain
        )));
    }
    let mut entries = rank_domains(domains);
    entries.truncate(cutoff);
    Ok(ReviewQueue {
        queue_id: meta.queue_id,
        topic_id: meta.topic_id,
        model_version: meta.model_version,
        cutoff,
        created_at: meta.created_at,
        total_ranked: domains.len(),
        entries,
    })
}

impl ReviewQueue {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank of `domain`.
    pub fn rank_of(&self, domain: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.domain == domain)
            .map(|i| i + 1)
    }

    pub fn ranked_list(&self) -> Result<RankedList> {
        RankedList::new(
            self.entries
                .iter()
                .map(|e| (e.domain.clone(), e.mean_score)),
            RankLevel::Domain,
        )
    }

    /// Rows with 1-based ranks in `first..=last`, clipped to the queue.
    pub fn rows(&self, first: usize, last: usize) -> &[DomainScore] {
        let start = first.max(1) - 1;
        let end = last.min(self.entries.len());
        if start >= end {
            &[]
        } else {
            &self.entries[start..end]
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("queue serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let q: ReviewQueue =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("review queue: {e}")))?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() > self.cutoff {
            return Err(Error::Format(format!(
                "queue `{}` holds {} entries, cutoff {}",
                self.queue_id,
                self.entries.len(),
                self.cutoff
            )));
        }
        if rank_domains(&self.entries) != self.entries {
            return Err(Error::Format(format!(
                "queue `{}` is not in rank order",
                self.queue_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Blocklist,
    Flag,
    Trustworthy,
    Skip,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::Blocklist,
        Verdict::Flag,
        Verdict::Trustworthy,
        Verdict::Skip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Blocklist => "blocklist",
            Verdict::Flag => "flag",
            Verdict::Trustworthy => "trustworthy",
            Verdict::Skip => "skip",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown verdict `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewDecision {
    pub decision_id: u64,
    pub queue_id: String,
    pub domain: String,
    pub verdict: Verdict,
    pub reviewer_id: String,
    pub timestamp: u64,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

/// Latest-effective decision per domain (highest decision id) among decisions for `queue_id`.
pub fn latest_verdicts<'a>(
    decisions: &'a [ReviewDecision],
    queue_id: &str,
) -> BTreeMap<&'a str, &'a ReviewDecision> {
    latest_by_domain(decisions.iter().filter(|d| d.queue_id == queue_id))
}

fn latest_by_domain<'a>(
    decisions: impl Iterator<Item = &'a ReviewDecision>,
) -> BTreeMap<&'a str, &'a ReviewDecision> {
    let mut latest: BTreeMap<&str, &ReviewDecision> = BTreeMap::new();
    for d in decisions {
        let slot = latest.entry(d.domain.as_str()).or_insert(d);
        if d.decision_id > slot.decision_id {
            *slot = d;
        }
    }
    latest
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// First 1-based rank in the bin.
    pub start: usize,
    /// Last 1-based rank in the bin.
    pub end: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEvaluation {
    pub queue_id: String,
    pub k: usize,
    pub precision_at_k: f64,
    /// Share of blocklisted domains in the whole queue.
    pub baseline: f64,
    pub n_positives: usize,
    pub queue_len: usize,
    /// 1-based ranks of blocklisted domains, ascending.
    pub positive_ranks: Vec<usize>,
    pub rank_histogram: Vec<HistogramBin>,
}

/// Scores a queue against its decisions; positives are domains whose latest verdict is blocklist.
pub fn evaluate_queue(
    queue: &ReviewQueue,
    decisions: &[ReviewDecision],
    k: usize,
    bin_width: usize,
) -> Result<QueueEvaluation> {
    if bin_width == 0 {
        return Err(Error::InvalidArgument(
            "histogram bin width must be at least 1".into(),
        ));
    }
    if queue.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "queue `{}` is empty",
            queue.queue_id
        )));
    }
    let latest = latest_verdicts(decisions, &queue.queue_id);
    if let Some(d) = latest.keys().find(|d| queue.rank_of(d).is_none()) {
        return Err(Error::InvalidArgument(format!(
            "decision for `{d}` does not reference a member of queue `{}`",
            queue.queue_id
        )));
    }
    let positives: HashSet<String> = latest
        .iter()
        .filter(|(_, d)| d.verdict == Verdict::Blocklist)
        .map(|(domain, _)| domain.to_string())
        .collect();
    let p_at_k = precision_at_k(&queue.ranked_list()?, &positives, k)?;
    let mut positive_ranks: Vec<usize> =
        positives.iter().filter_map(|d| queue.rank_of(d)).collect();
    positive_ranks.sort_unstable();
    let n_bins = queue.len().div_ceil(bin_width);
    let mut rank_histogram: Vec<HistogramBin> = (0..n_bins)
        .map(|b| HistogramBin {
            start: b * bin_width + 1,
            end: ((b + 1) * bin_width).min(queue.len()),
            count: 0,
        })
        .collect();
    for r in &positive_ranks {
        rank_histogram[(r - 1) / bin_width].count += 1;
    }
    Ok(QueueEvaluation {
        queue_id: queue.queue_id.clone(),
        k,
        precision_at_k: p_at_k,
        baseline: positives.len() as f64 / queue.len() as f64,
        n_positives: positives.len(),
        queue_len: queue.len(),
        positive_ranks,
        rank_histogram,
    })
}

/// Maps verdicts to training labels. `None` leaves a page's label untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPolicy {
    pub blocklist: Option<Label>,
    pub flag: Option<Label>,
    pub trustworthy: Option<Label>,
    pub skip: Option<Label>,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            blocklist: Some(Label::Disinformation),
            flag: None,
            trustworthy: Some(Label::Trustworthy),
            skip: None,
        }
    }
}

impl LabelPolicy {
    pub fn label_for(&self, verdict: Verdict) -> Option<Label> {
        match verdict {
            Verdict::Blocklist => self.blocklist,
            Verdict::Flag => self.flag,
            Verdict::Trustworthy => self.trustworthy,
            Verdict::Skip => self.skip,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub corpus: Corpus,
    /// page_id → id of the decision that set its label.
    pub audit: BTreeMap<String, u64>,
    /// Decided domains with no page in the corpus.
    pub unknown_domains: Vec<String>,
    /// Pages whose label or split differs from the input corpus.
    pub changed: usize,
}

/// Folds decisions into corpus labels.
///
/// For each domain the latest decision across all queues applies. Only pages in
/// `scope` (typically the topic-filtered page ids) are touched; `None` means all
/// pages. Newly labeled pages without a split join the training split.
pub fn merge_decisions(
    corpus: &Corpus,
    decisions: &[ReviewDecision],
    policy: &LabelPolicy,
    scope: Option<&HashSet<String>>,
) -> Result<MergeOutcome> {
    let latest = latest_by_domain(decisions.iter());
    let domains: HashSet<&str> = corpus.records().iter().map(|p| p.domain.as_str()).collect();
    let unknown_domains: Vec<String> = latest
        .keys()
        .filter(|d| !domains.contains(*d))
        .map(|d| d.to_string())
        .collect();
    for d in &unknown_domains {
        tracing::warn!(domain = %d, "decision references a domain absent from the corpus; skipped");
    }
    let mut audit = BTreeMap::new();
    let mut changed = 0;
    let merged = corpus.map_records(|p: &PageRecord| {
        let mut p = p.clone();
        if scope.is_some_and(|s| !s.contains(&p.page_id)) {
            return p;
        }
        let Some(decision) = latest.get(p.domain.as_str()) else {
            return p;
        };
        let Some(label) = policy.label_for(decision.verdict) else {
            return p;
        };
        let before = (p.label, p.split);
        p.label = Some(label);
        if p.split == Split::Unassigned {
            p.split = Split::Train;
        }
        if (p.label, p.split) != before {
            changed += 1;
        }
        audit.insert(p.page_id.clone(), decision.decision_id);
        p
    })?;
    Ok(MergeOutcome {
        corpus: merged,
        audit,
        unknown_domains,
        changed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(page: &str, domain: &str, score: f64) -> PageScore {
        PageScore {
            page_id: page.into(),
            domain: domain.into(),
            score,
        }
    }

    fn ds(domain: &str, score: f64) -> DomainScore {
        DomainScore {
            domain: domain.into(),
            mean_score: score,
            page_count: 1,
            score_std: 0.0,
            model_version: 1,
        }
    }

    fn meta(id: &str) -> QueueMeta {
        QueueMeta {
            queue_id: id.into(),
            topic_id: "t".into(),
            model_version: 1,
            created_at: 0,
        }
    }

    fn decision(id: u64, domain: &str, verdict: Verdict) -> ReviewDecision {
        ReviewDecision {
            decision_id: id,
            queue_id: "q".into(),
            domain: domain.into(),
            verdict,
            reviewer_id: "r".into(),
            timestamp: id,
            note: None,
            idempotency_key: None,
        }
    }

    #[test]
    fn mean_of_three_pages() {
        let agg = aggregate_domains(
            &[ps("a", "x", 0.2), ps("b", "x", 0.4), ps("c", "x", 0.9)],
            1,
            1,
        )
        .unwrap();
        assert_eq!(agg.domains.len(), 1);
        assert!((agg.domains[0].mean_score - 0.5).abs() < 1e-12);
        assert_eq!(agg.domains[0].page_count, 3);
    }

    #[test]
    fn single_page_domain() {
        let agg = aggregate_domains(&[ps("a", "x", 0.37)], 1, 4).unwrap();
        assert_eq!(agg.domains[0].mean_score, 0.37);
        assert_eq!(agg.domains[0].score_std, 0.0);
        assert_eq!(agg.domains[0].model_version, 4);
    }

    #[test]
    fn min_pages_excludes_and_reports() {
        let scores = [ps("a", "x", 0.1), ps("b", "x", 0.3), ps("c", "y", 0.9)];
        let agg = aggregate_domains(&scores, 2, 1).unwrap();
        assert_eq!(agg.domains.len(), 1);
        assert_eq!(
            agg.excluded,
            vec![ExcludedDomain {
                domain: "y".into(),
                page_count: 1
            }]
        );
    }

    #[test]
    fn empty_input_is_empty_output() {
        let agg = aggregate_domains(&[], 1, 1).unwrap();
        assert!(agg.domains.is_empty() && agg.excluded.is_empty());
    }

    #[test]
    fn rejects_scores_outside_unit_interval() {
        assert!(aggregate_domains(&[ps("a", "x", 1.5)], 1, 1).is_err());
        assert!(aggregate_domains(&[ps("a", "x", f64::NAN)], 1, 1).is_err());
    }

    #[test]
    fn median_and_trimmed() {
        let scores: Vec<PageScore> = [0.1, 0.2, 0.3, 0.9]
            .iter()
            .enumerate()
            .map(|(i, &s)| ps(&format!("p{i}"), "x", s))
            .collect();
        let med = aggregate_domains_with(&scores, 1, 1, Aggregation::Median).unwrap();
        assert!((med.domains[0].mean_score - 0.25).abs() < 1e-12);
        let trim =
            aggregate_domains_with(&scores, 1, 1, Aggregation::Trimmed { fraction: 0.25 }).unwrap();
        assert!((trim.domains[0].mean_score - 0.25).abs() < 1e-12);
    }

    #[test]
    fn queue_takes_top_by_score_with_name_ties() {
        let domains = [
            ds("c", 0.5),
            ds("a", 0.9),
            ds("b", 0.5),
            ds("d", 0.1),
            ds("e", 0.7),
        ];
        let q = build_queue(&domains, 3, meta("q")).unwrap();
        let order: Vec<&str> = q.entries.iter().map(|e| e.domain.as_str()).collect();
        assert_eq!(order, ["a", "e", "b"]);
        assert_eq!(q.total_ranked, 5);
    }

    #[test]
    fn cutoff_beyond_population_does_not_pad() {
        let q = build_queue(&[ds("a", 0.2), ds("b", 0.3)], 300, meta("q")).unwrap();
        assert_eq!(q.len(), 2);
        assert!(build_queue(&[ds("a", 0.2)], 0, meta("q")).is_err());
    }

    #[test]
    fn queue_rejects_mixed_model_versions() {
        let mut d = ds("a", 0.2);
        d.model_version = 2;
        assert!(build_queue(&[d], 3, meta("q")).is_err());
    }

    #[test]
    fn rows_are_one_based_and_clipped() {
        let domains: Vec<DomainScore> = (0..10)
            .map(|i| ds(&format!("d{i}"), i as f64 / 10.0))
            .collect();
        let q = build_queue(&domains, 10, meta("q")).unwrap();
        let rows = q.rows(2, 4);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].domain, "d8");
        assert_eq!(q.rows(9, 50).len(), 2);
        assert!(q.rows(11, 20).is_empty());
    }

    #[test]
    fn baseline_for_26_of_300() {
        let domains: Vec<DomainScore> = (0..300)
            .map(|i| ds(&format!("d{i:03}"), 1.0 - i as f64 / 1000.0))
            .collect();
        let q = build_queue(&domains, 300, meta("q")).unwrap();
        let decisions: Vec<ReviewDecision> = (0..26)
            .map(|i| decision(i + 1, &format!("d{:03}", i * 11), Verdict::Blocklist))
            .collect();
        let ev = evaluate_queue(&q, &decisions, 40, 10).unwrap();
        assert!((ev.baseline - 26.0 / 300.0).abs() < 1e-12);
        assert_eq!(ev.n_positives, 26);
        // Ranks 1, 12, 23, 34 fall in the top 40.
        assert!((ev.precision_at_k - 4.0 / 40.0).abs() < 1e-12);
        assert_eq!(ev.rank_histogram.len(), 30);
        assert_eq!(ev.rank_histogram.iter().map(|b| b.count).sum::<usize>(), 26);
    }

    #[test]
    fn latest_verdict_wins() {
        let q = build_queue(&[ds("a", 0.9), ds("b", 0.8)], 2, meta("q")).unwrap();
        let decisions = [
            decision(1, "a", Verdict::Blocklist),
            decision(2, "a", Verdict::Skip),
            decision(3, "b", Verdict::Flag),
            decision(4, "b", Verdict::Blocklist),
        ];
        let ev = evaluate_queue(&q, &decisions, 1, 1).unwrap();
        assert_eq!(ev.positive_ranks, vec![2]);
        assert_eq!(ev.precision_at_k, 0.0);
    }

    #[test]
    fn evaluate_rejects_bad_k_and_foreign_domains() {
        let q = build_queue(&[ds("a", 0.9)], 2, meta("q")).unwrap();
        assert!(matches!(
            evaluate_queue(&q, &[], 2, 1),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(evaluate_queue(&q, &[decision(1, "zzz", Verdict::Flag)], 1, 1).is_err());
        // Decisions on other queues are ignored.
        let mut other = decision(1, "zzz", Verdict::Flag);
        other.queue_id = "other".into();
        assert!(evaluate_queue(&q, &[other], 1, 1).is_ok());
    }

    fn small_corpus() -> Corpus {
        let mut records = Vec::new();
        for (i, domain) in [
            "bad.example",
            "bad.example",
            "bad.example",
            "bad.example",
            "ok.example",
            "meh.example",
        ]
        .iter()
        .enumerate()
        {
            let mut p = PageRecord::new(format!("p{i}"), *domain, "en");
            p.embedding_reduced = Some(vec![1.0, 0.0]);
            records.push(p);
        }
        Corpus::new("t", 2, 2, records).unwrap()
    }

    #[test]
    fn blocklist_labels_every_page_of_the_domain() {
        let corpus = small_corpus();
        let out = merge_decisions(
            &corpus,
            &[decision(7, "bad.example", Verdict::Blocklist)],
            &LabelPolicy::default(),
            None,
        )
        .unwrap();
        let labeled: Vec<&PageRecord> = out
            .corpus
            .records()
            .iter()
            .filter(|p| p.label == Some(Label::Disinformation))
            .collect();
        assert_eq!(labeled.len(), 4);
        assert!(labeled.iter().all(|p| p.split == Split::Train));
        assert_eq!(out.audit.len(), 4);
        assert!(out.audit.values().all(|&id| id == 7));
        assert_eq!(out.changed, 4);
        // Input untouched.
        assert!(corpus.records().iter().all(|p| p.label.is_none()));
    }

    #[test]
    fn merge_is_idempotent_and_reports_unknown_domains() {
        let corpus = small_corpus();
        let decisions = [
            decision(1, "bad.example", Verdict::Blocklist),
            decision(2, "ok.example", Verdict::Trustworthy),
            decision(3, "meh.example", Verdict::Flag),
            decision(4, "ghost.example", Verdict::Blocklist),
        ];
        let policy = LabelPolicy::default();
        let once = merge_decisions(&corpus, &decisions, &policy, None).unwrap();
        let twice = merge_decisions(&once.corpus, &decisions, &policy, None).unwrap();
        assert_eq!(once.corpus.records(), twice.corpus.records());
        assert_eq!(once.audit, twice.audit);
        assert_eq!(twice.changed, 0);
        assert_eq!(once.unknown_domains, vec!["ghost.example".to_string()]);
    }

    #[test]
    fn merge_respects_scope() {
        let corpus = small_corpus();
        let scope: HashSet<String> = ["p0".to_string(), "p1".to_string()].into();
        let out = merge_decisions(
            &corpus,
            &[decision(1, "bad.example", Verdict::Blocklist)],
            &LabelPolicy::default(),
            Some(&scope),
        )
        .unwrap();
        let ids: Vec<&str> = out.audit.keys().map(String::as_str).collect();
        assert_eq!(ids, ["p0", "p1"]);
    }

    #[test]
    fn verdict_round_trip() {
        for v in Verdict::ALL {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert!("ban".parse::<Verdict>().is_err());
    }

    proptest! {
        #[test]
        fn aggregation_matches_grouping_oracle(
            raw in prop::collection::vec((0usize..50, 0.0f64..=1.0), 1..200),
            min_pages in 1usize..4,
        ) {
            let scores: Vec<PageScore> = raw
                .iter()
                .enumerate()
                .map(|(i, &(d, s))| ps(&format!("p{i}"), &format!("d{d:02}"), s))
                .collect();
            let agg = aggregate_domains(&scores, min_pages, 1).unwrap();
            let mut oracle: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for s in &scores {
                oracle.entry(s.domain.clone()).or_default().push(s.score);
            }
            let included: usize = agg.domains.iter().map(|d| d.page_count).sum();
            let expected: usize = oracle.values().filter(|v| v.len() >= min_pages).map(Vec::len).sum();
            prop_assert_eq!(included, expected);
            for d in &agg.domains {
                let v = &oracle[&d.domain];
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                prop_assert!((d.mean_score - mean).abs() <= 1e-9);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= d.mean_score && d.mean_score <= hi);
            }
            for e in &agg.excluded {
                prop_assert!(oracle[&e.domain].len() < min_pages);
            }
        }

        #[test]
        fn queue_prefix_property(
            scores in prop::collection::vec(0.0f64..1.0, 1..120),
            c1 in 1usize..60,
            extra in 0usize..60,
        ) {
            let domains: Vec<DomainScore> = scores.iter().enumerate().map(|(i, &s)| ds(&format!("d{i:03}"), (s * 20.0).round() / 20.0)).collect();
            let a = build_queue(&domains, c1, meta("a")).unwrap();
            let b = build_queue(&domains, c1 + extra, meta("b")).unwrap();
            prop_assert_eq!(&b.entries[..a.len()], &a.entries[..]);
            let mut oracle = domains.clone();
            oracle.sort_by(|x, y| y.mean_score.partial_cmp(&x.mean_score).unwrap().then(x.domain.cmp(&y.domain)));
            prop_assert_eq!(&a.entries[..], &oracle[..a.len()]);
        }
    }
}
