//! Scripted desk-scale experiments: projection quality, topic-filter ablation and language confound.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fixtures;
use super::metrics::{
    auc_roc, language_score_table, psamecat, LanguageScoreTable, LanguageScored, MetricsDoc,
    PSameCatConfig,
};
use crate::corpus::{
    generate_synthetic_corpus, Corpus, EmbeddingField, Label, PageRecord, Split, SyntheticSpec,
};
use crate::embed::{embed_corpus, make_projection, SyntheticEmbedder};
use crate::error::{Error, Result};
use crate::redd::{predict_pages, train, TrainConfig};
use crate::topic::{build_topic, calibrate_with_categories, filter_on_topic, TopicModel};
use crate::util::{derive_seed, seeded_rng};

fn labeled_in<'a>(pages: &'a [PageRecord], split: Split) -> Vec<&'a PageRecord> {
    pages
        .iter()
        .filter(|p| p.split == split && p.label.is_some())
        .collect()
}

/// Trains on `train` pages, returns test AUC.
fn train_and_auc(
    train_pages: &[&PageRecord],
    test_pages: &[&PageRecord],
    cfg: &TrainConfig,
) -> Result<f64> {
    let model = train(train_pages, cfg)?;
    let scores = predict_pages(&model, test_pages.iter().copied())?;
    let s: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let y: Vec<bool> = test_pages
        .iter()
        .map(|p| p.label == Some(Label::Disinformation))
        .collect();
    auc_roc(&s, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionQuality {
    pub full: f64,
    pub reduced: f64,
}

impl ProjectionQuality {
    /// Reduced minus full; negative when projection loses neighbourhood structure.
    pub fn delta(&self) -> f64 {
        self.reduced - self.full
    }
}

/// pSameCat of the full embeddings and of their `d_red`-dimensional projection.
/// `seed` drives both corpus generation and the projection.
pub fn run_projection_quality(
    spec: &SyntheticSpec,
    d_red: usize,
    k_neighbors: usize,
    seed: u64,
) -> Result<ProjectionQuality> {
    let records = generate_synthetic_corpus(spec, seed)?;
    let corpus = Corpus::new(spec.name.clone(), spec.d_full, d_red, records)?;
    let projection = make_projection(spec.d_full, d_red, derive_seed(seed, b"projection"))?;
    let corpus = projection.project_corpus(&corpus)?;
    let cfg = PSameCatConfig { k_neighbors };
    Ok(ProjectionQuality {
        full: psamecat(corpus.records(), EmbeddingField::Full, &cfg)?.score,
        reduced: psamecat(corpus.records(), EmbeddingField::Reduced, &cfg)?.score,
    })
}

/// Draws `n_examples` train pages of `category` with a stream derived from `seed`.
pub fn sample_examples<'a>(
    corpus: &'a Corpus,
    category: &str,
    n_examples: usize,
    seed: u64,
) -> Result<Vec<&'a PageRecord>> {
    let candidates: Vec<&PageRecord> = corpus
        .records()
        .iter()
        .filter(|p| p.split == Split::Train && p.categories.contains(category))
        .collect();
    let mut rng = seeded_rng(derive_seed(seed, b"examples"));
    let mut picked =
        rand::seq::index::sample(&mut rng, candidates.len(), n_examples.min(candidates.len()))
            .into_vec();
    picked.sort_unstable();
    if picked.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no train pages carry category `{category}`"
        )));
    }
    Ok(picked.into_iter().map(|i| candidates[i]).collect())
}

/// Builds a topic from `n_examples` train pages of `category`, drawn with `seed`,
/// and calibrates its threshold with category-based relevance marks.
pub fn prepare_topic(
    corpus: &Corpus,
    category: &str,
    n_examples: usize,
    edges: &[f64],
    sample_size: usize,
    seed: u64,
) -> Result<TopicModel> {
    let examples = sample_examples(corpus, category, n_examples, seed)?;
    let mut topic = build_topic(category, &examples, 0)?.with_edges(edges.to_vec())?;
    calibrate_with_categories(&mut topic, corpus.records(), category, sample_size, seed)?;
    Ok(topic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub auc_filtered_train: f64,
    pub auc_unfiltered_train: f64,
    pub threshold: f64,
    pub n_train_filtered: usize,
    pub n_train_full: usize,
    pub n_test_filtered: usize,
}

impl AblationResult {
    pub fn gap(&self) -> f64 {
        self.auc_filtered_train - self.auc_unfiltered_train
    }

    pub fn to_metrics(&self) -> MetricsDoc {
        MetricsDoc::from([
            (
                "ablation.auc_filtered_train".into(),
                self.auc_filtered_train,
            ),
            (
                "ablation.auc_unfiltered_train".into(),
                self.auc_unfiltered_train,
            ),
            ("ablation.gap".into(), self.gap()),
            ("ablation.threshold".into(), self.threshold),
            (
                "ablation.n_train_filtered".into(),
                self.n_train_filtered as f64,
            ),
            ("ablation.n_train_full".into(), self.n_train_full as f64),
            (
                "ablation.n_test_filtered".into(),
                self.n_test_filtered as f64,
            ),
        ])
    }
}

/// Trains REDD on the topic-filtered and on the full training split, and scores
/// both on the topic-filtered test split. `corpus` must carry reduced embeddings.
pub fn run_filter_ablation(
    corpus: &Corpus,
    topic: &TopicModel,
    cfg: &TrainConfig,
) -> Result<AblationResult> {
    let threshold = topic
        .threshold
        .ok_or_else(|| Error::ThresholdUnset(topic.topic_id.clone()))?;
    let filtered = filter_on_topic(topic, corpus.records())?;
    let train_filtered = labeled_in(&filtered, Split::Train);
    let test_filtered = labeled_in(&filtered, Split::Test);
    let train_full = labeled_in(corpus.records(), Split::Train);
    Ok(AblationResult {
        auc_filtered_train: train_and_auc(&train_filtered, &test_filtered, cfg)?,
        auc_unfiltered_train: train_and_auc(&train_full, &test_filtered, cfg)?,
        threshold,
        n_train_filtered: train_filtered.len(),
        n_train_full: train_full.len(),
        n_test_filtered: test_filtered.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub spec: SyntheticSpec,
    pub topic_category: String,
    pub d_red: usize,
    pub n_examples: usize,
    pub sample_size: usize,
    pub edges: Vec<f64>,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            spec: fixtures::ablation_spec(),
            topic_category: fixtures::ABLATION_TOPIC.into(),
            d_red: 100,
            n_examples: 20,
            sample_size: 20,
            edges: fixtures::fine_bucket_edges(),
            train: TrainConfig::default(),
        }
    }
}

/// Generates, projects and calibrates a corpus from `cfg`, then runs the ablation.
/// `seed` drives corpus generation, projection, sampling and training.
pub fn run_synthetic_ablation(cfg: &AblationConfig, seed: u64) -> Result<AblationResult> {
    let records = generate_synthetic_corpus(&cfg.spec, seed)?;
    let corpus = Corpus::new(cfg.spec.name.clone(), cfg.spec.d_full, cfg.d_red, records)?;
    let projection = make_projection(cfg.spec.d_full, cfg.d_red, derive_seed(seed, b"projection"))?;
    let corpus = projection.project_corpus(&corpus)?;
    let topic = prepare_topic(
        &corpus,
        &cfg.topic_category,
        cfg.n_examples,
        &cfg.edges,
        cfg.sample_size,
        derive_seed(seed, b"buckets"),
    )?;
    let train_cfg = TrainConfig {
        seed: derive_seed(seed, b"train"),
        ..cfg.train.clone()
    };
    run_filter_ablation(&corpus, &topic, &train_cfg)
}

/// Text corpus where one focus language holds most disinformation pages.
///
/// Page text is a bag of tokens: each token comes from the page's class lexicon
/// with probability `signal_rate`, otherwise from a shared vocabulary. Language
/// never changes the tokens, so any language signal must come from the embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfoundSpec {
    pub languages: Vec<String>,
    pub focus_language: String,
    pub pages_per_language: usize,
    pub focus_positive_share: f64,
    pub other_positive_share: f64,
    pub tokens_per_page: usize,
    pub lexicon_size: usize,
    pub common_vocab: usize,
    pub signal_rate: f64,
    pub test_fraction: f64,
    pub d_full: usize,
    pub d_red: usize,
    /// Language weight of the language-dominated embedder.
    pub high_lang_weight: f64,
}

impl Default for ConfoundSpec {
    fn default() -> Self {
        ConfoundSpec {
            languages: ["de", "en", "fr", "es"].map(String::from).to_vec(),
            focus_language: "de".into(),
            pages_per_language: 400,
            focus_positive_share: 0.8,
            other_positive_share: 0.2,
            tokens_per_page: 24,
            lexicon_size: 40,
            common_vocab: 400,
            signal_rate: 0.3,
            test_fraction: 0.25,
            d_full: 256,
            d_red: 100,
            high_lang_weight: 0.95,
        }
    }
}

impl ConfoundSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Error::InvalidArgument(format!("confound spec: {m}"));
        if !self.languages.contains(&self.focus_language) {
            return Err(bad("focus language must be one of the languages"));
        }
        if self.languages.len() < 2 {
            return Err(bad("need at least one non-focus language"));
        }
        for share in [
            self.focus_positive_share,
            self.other_positive_share,
            self.signal_rate,
        ] {
            if !(0.0..=1.0).contains(&share) {
                return Err(bad("shares and rates must lie in [0, 1]"));
            }
        }
        if self.pages_per_language == 0
            || self.tokens_per_page == 0
            || self.lexicon_size == 0
            || self.common_vocab == 0
        {
            return Err(bad("counts must be positive"));
        }
        if self.d_red == 0 || self.d_red > self.d_full {
            return Err(bad("need 0 < d_red <= d_full"));
        }
        if !(0.0..=1.0).contains(&self.high_lang_weight) {
            return Err(bad("high_lang_weight must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Labeled text pages (no embeddings) for the confound experiment.
pub fn generate_confound_corpus(spec: &ConfoundSpec, seed: u64) -> Result<Vec<PageRecord>> {
    spec.validate()?;
    let mut rng = seeded_rng(derive_seed(seed, b"confound-text"));
    let mut records = Vec::new();
    for lang in &spec.languages {
        let share = if *lang == spec.focus_language {
            spec.focus_positive_share
        } else {
            spec.other_positive_share
        };
        let n_pos = (spec.pages_per_language as f64 * share).round() as usize;
        let n_test = (spec.pages_per_language as f64 * spec.test_fraction).round() as usize;
        for i in 0..spec.pages_per_language {
            let label = if i < n_pos {
                Label::Disinformation
            } else {
                Label::Trustworthy
            };
            let lexicon = if label.is_positive() { "dis" } else { "tru" };
            let tokens: Vec<String> = (0..spec.tokens_per_page)
                .map(|_| {
                    if rng.random_bool(spec.signal_rate) {
                        format!("{lexicon}{}", rng.random_range(0..spec.lexicon_size))
                    } else {
                        format!("w{}", rng.random_range(0..spec.common_vocab))
                    }
                })
                .collect();
            let n = records.len();
            let mut p = PageRecord::new(
                format!("p{n:06}"),
                format!("{}{:02}.{lang}.example", lexicon, i % 10),
                lang.clone(),
            );
            p.text = tokens.join(" ");
            p.label = Some(label);
            // Interleave test pages across both classes.
            p.split = if (i * 7919) % spec.pages_per_language < n_test {
                Split::Test
            } else {
                Split::Train
            };
            records.push(p);
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundArm {
    pub lang_weight: f64,
    pub table: LanguageScoreTable,
    /// Trustworthy-class focus minus other mean score.
    pub trustworthy_gap: f64,
    pub test_auc: f64,
    pub per_language_auc: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundResult {
    pub language_weighted: ConfoundArm,
    pub language_agnostic: ConfoundArm,
    /// Non-focus language with the most test pages (ties by code).
    pub largest_other_language: String,
}

impl ConfoundResult {
    pub fn to_metrics(&self) -> MetricsDoc {
        let mut doc = MetricsDoc::new();
        for (name, arm) in [
            ("weighted", &self.language_weighted),
            ("agnostic", &self.language_agnostic),
        ] {
            doc.extend(arm.table.to_metrics(&format!("confound.{name}.table.")));
            doc.insert(format!("confound.{name}.lang_weight"), arm.lang_weight);
            doc.insert(
                format!("confound.{name}.trustworthy_gap"),
                arm.trustworthy_gap,
            );
            doc.insert(format!("confound.{name}.test_auc"), arm.test_auc);
            for (lang, auc) in &arm.per_language_auc {
                doc.insert(format!("confound.{name}.auc.{lang}"), *auc);
            }
        }
        doc
    }
}

fn confound_arm(
    base: &Corpus,
    spec: &ConfoundSpec,
    lang_weight: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ConfoundArm> {
    let embedder =
        SyntheticEmbedder::new(spec.d_full, derive_seed(seed, b"embedder"), lang_weight)?;
    let embedded = embed_corpus(base, &embedder)?;
    let projection = make_projection(spec.d_full, spec.d_red, derive_seed(seed, b"projection"))?;
    let corpus = projection.project_corpus(&embedded)?;
    let train_pages = labeled_in(corpus.records(), Split::Train);
    let test_pages = labeled_in(corpus.records(), Split::Test);
    let model = train(&train_pages, cfg)?;
    let scores = predict_pages(&model, test_pages.iter().copied())?;
    let scored: Vec<LanguageScored> = test_pages
        .iter()
        .zip(&scores)
        .map(|(p, (_, s))| LanguageScored {
            score: *s,
            label: p.label.expect("labeled"),
            language: p.language.clone(),
        })
        .collect();
    let table = language_score_table(&scored, &spec.focus_language)?;
    let trustworthy_gap = table.gap(Label::Trustworthy).ok_or_else(|| {
        Error::InvalidArgument("trustworthy class missing from a language group".into())
    })?;
    let all_s: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let all_y: Vec<bool> = scored.iter().map(|s| s.label.is_positive()).collect();
    let mut per_language_auc = BTreeMap::new();
    for lang in scored
        .iter()
        .map(|s| s.language.as_str())
        .collect::<BTreeSet<_>>()
    {
        let (s, y): (Vec<f64>, Vec<bool>) = scored
            .iter()
            .filter(|p| p.language == lang)
            .map(|p| (p.score, p.label.is_positive()))
            .unzip();
        if let Ok(auc) = auc_roc(&s, &y) {
            per_language_auc.insert(lang.to_string(), auc);
        }
    }
    Ok(ConfoundArm {
        lang_weight,
        table,
        trustworthy_gap,
        test_auc: auc_roc(&all_s, &all_y)?,
        per_language_auc,
    })
}

/// Trains REDD on the same texts embedded twice, once language-dominated and once
/// language-agnostic, and tabulates test scores by class and language group.
pub fn run_language_confound(
    spec: &ConfoundSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ConfoundResult> {
    let records = generate_confound_corpus(spec, seed)?;
    let base = Corpus::new("confound", spec.d_full, spec.d_red, records)?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, b"train"),
        ..cfg.clone()
    };
    let language_weighted = confound_arm(&base, spec, spec.high_lang_weight, &cfg, seed)?;
    let language_agnostic = confound_arm(&base, spec, 0.0, &cfg, seed)?;

    let mut test_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in base
        .records()
        .iter()
        .filter(|p| p.split == Split::Test && p.language != spec.focus_language)
    {
        *test_counts.entry(p.language.as_str()).or_default() += 1;
    }
    let largest_other_language = test_counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
        .ok_or_else(|| Error::InvalidArgument("no non-focus test pages".into()))?;
    Ok(ConfoundResult {
        language_weighted,
        language_agnostic,
        largest_other_language,
    })
}
