use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingField, Label, PageRecord};
use crate::error::{Error, Result};
use crate::topic::cosine_from_parts;

/// Flat metric name to value document.
pub type MetricsDoc = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PSameCatConfig {
    pub k_neighbors: usize,
}

impl Default for PSameCatConfig {
    fn default() -> Self {
        PSameCatConfig { k_neighbors: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PSameCatReport {
    pub score: f64,
    pub n_evaluated: usize,
    /// Pages without categories, left out of both queries and candidates.
    pub n_excluded: usize,
}

/// Widened vector and its squared norm, accumulated in the same order as
/// `topic::cosine_similarity` so both give bit-identical cosines.
fn widen(v: &[f32]) -> (Vec<f64>, f64) {
    let w: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    let mut sq = 0.0;
    for x in &w {
        sq += x * x;
    }
    (w, sq)
}

/// Mean fraction of each page's k nearest cosine neighbors (self excluded, ties by
/// page_id) that share at least one category with it. Exhaustive search.
pub fn psamecat(
    pages: &[PageRecord],
    field: EmbeddingField,
    cfg: &PSameCatConfig,
) -> Result<PSameCatReport> {
    let k = cfg.k_neighbors;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "k_neighbors must be at least 1".into(),
        ));
    }
    let mut eligible = Vec::with_capacity(pages.len());
    let mut dim = None;
    for p in pages {
        let v = p.require_embedding(field)?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::dims(
                    format!("embedding of `{}`", p.page_id),
                    d,
                    v.len(),
                ))
            }
            _ => {}
        }
        if !p.categories.is_empty() {
            eligible.push((p, widen(v)));
        }
    }
    let n_excluded = pages.len() - eligible.len();
    if eligible.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "pSameCat with k = {k} needs at least {} categorized pages, got {}",
            k + 1,
            eligible.len()
        )));
    }

    // Integer hit count, so the score does not depend on page order.
    let mut hits = 0usize;
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(eligible.len());
    for (i, (page, (v, vv))) in eligible.iter().enumerate() {
        candidates.clear();
        for (j, (_, (w, ww))) in eligible.iter().enumerate() {
            if i != j {
                let mut ab = 0.0;
                for (a, b) in v.iter().zip(w) {
                    ab += a * b;
                }
                candidates.push((1.0 - cosine_from_parts(ab, *vv, *ww), j));
            }
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0)
                .then_with(|| eligible[a.1].0.page_id.cmp(&eligible[b.1].0.page_id))
        };
        candidates.select_nth_unstable_by(k - 1, order);
        hits += candidates[..k]
            .iter()
            .filter(|(_, j)| !eligible[*j].0.categories.is_disjoint(&page.categories))
            .count();
    }
    Ok(PSameCatReport {
        score: hits as f64 / (k * eligible.len()) as f64,
        n_evaluated: eligible.len(),
        n_excluded,
    })
}

/// Mann-Whitney AUC with tied scores counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dims(
            "auc scores vs labels",
            scores.len(),
            labels.len(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "{n_pos} positives, {n_neg} negatives"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their average.
        let avg = (start + 1 + end) as f64 / 2.0;
        rank_sum_pos += avg * idx[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankLevel {
    Page,
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
}

/// Items in descending score order, ties broken by id ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    items: Vec<RankedItem>,
    level: RankLevel,
}

impl RankedList {
    pub fn new(items: impl IntoIterator<Item = (String, f64)>, level: RankLevel) -> Result<Self> {
        let mut items: Vec<RankedItem> = items
            .into_iter()
            .map(|(id, score)| RankedItem { id, score })
            .collect();
        if items.iter().any(|i| !i.score.is_finite()) {
            return Err(Error::InvalidArgument(
                "ranked list scores must be finite".into(),
            ));
        }
        items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        let mut seen = HashSet::with_capacity(items.len());
        if let Some(dup) = items.iter().find(|i| !seen.insert(i.id.as_str())) {
            return Err(Error::DuplicateId(dup.id.clone()));
        }
        Ok(RankedList { items, level })
    }

    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    pub fn level(&self) -> RankLevel {
        self.level
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = &RankedItem> {
        self.items.iter().take(k)
    }
}

pub fn precision_at_k(ranked: &RankedList, positives: &HashSet<String>, k: usize) -> Result<f64> {
    if k == 0 || k > ranked.len() {
        return Err(Error::KOutOfRange {
            k,
            len: ranked.len(),
        });
    }
    let hits = ranked
        .top(k)
        .filter(|item| positives.contains(&item.id))
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScored {
    pub score: f64,
    pub label: Label,
    pub language: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageGroup {
    Focus,
    Other,
}

/// Summary of one (class, language group) cell. Mean and std are `None` for empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub count: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScoreTable {
    pub focus_language: String,
    /// Indexed `[class][group]`: class 0 trustworthy, 1 disinformation; group 0 focus, 1 other.
    pub cells: [[ScoreCell; 2]; 2],
}

impl LanguageScoreTable {
    pub fn cell(&self, label: Label, group: LanguageGroup) -> &ScoreCell {
        &self.cells[label.as_u8() as usize][group as usize]
    }

    pub fn total(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.count).sum()
    }

    /// Focus-minus-other mean score gap for one class, if both cells are populated.
    pub fn gap(&self, label: Label) -> Option<f64> {
        Some(
            self.cell(label, LanguageGroup::Focus).mean?
                - self.cell(label, LanguageGroup::Other).mean?,
        )
    }

    pub fn to_metrics(&self, prefix: &str) -> MetricsDoc {
        let mut doc = MetricsDoc::new();
        for label in [Label::Trustworthy, Label::Disinformation] {
            let class = if label.is_positive() {
                "disinformation"
            } else {
                "trustworthy"
            };
            for group in [LanguageGroup::Focus, LanguageGroup::Other] {
                let g = if group == LanguageGroup::Focus {
                    "focus"
                } else {
                    "other"
                };
                let c = self.cell(label, group);
                doc.insert(format!("{prefix}{class}.{g}.count"), c.count as f64);
                if let (Some(m), Some(s)) = (c.mean, c.std) {
                    doc.insert(format!("{prefix}{class}.{g}.mean"), m);
                    doc.insert(format!("{prefix}{class}.{g}.std"), s);
                }
            }
        }
        doc
    }
}

pub fn language_score_table(
    pages: &[LanguageScored],
    focus_language: &str,
) -> Result<LanguageScoreTable> {
    if pages.is_empty() {
        return Err(Error::InvalidArgument(
            "language table needs at least one scored page".into(),
        ));
    }
    if !pages.iter().any(|p| p.language == focus_language) {
        return Err(Error::InvalidArgument(format!(
            "focus language `{focus_language}` not present"
        )));
    }
    let mut groups: [[Vec<f64>; 2]; 2] = Default::default();
    for p in pages {
        let g = usize::from(p.language != focus_language);
        groups[p.label.as_u8() as usize][g].push(p.score);
    }
    let summarize = |v: &Vec<f64>| -> ScoreCell {
        if v.is_empty() {
            return ScoreCell {
                count: 0,
                mean: None,
                std: None,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        ScoreCell {
            count: v.len(),
            mean: Some(mean),
            std: Some(var.sqrt()),
        }
    };
    Ok(LanguageScoreTable {
        focus_language: focus_language.to_string(),
        cells: [
            [summarize(&groups[0][0]), summarize(&groups[0][1])],
            [summarize(&groups[1][0]), summarize(&groups[1][1])],
        ],
    })
}
