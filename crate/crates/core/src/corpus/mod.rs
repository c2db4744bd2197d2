//! Page records, corpus manifests and their on-disk form.

mod io;
pub mod synthetic;
mod text;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    import_embeddings, load_corpus, parse_corpus, save_corpus, write_corpus, EmbeddingField,
};
pub use synthetic::{generate_synthetic_corpus, CellSpec, LanguageSpec, SyntheticSpec, TopicSpec};
pub use text::{
    assemble_text, truncate_tokens, truncate_tokens_with, Tag, TagBlock, Tokenizer,
    WhitespaceTokenizer, DEFAULT_TOKEN_LIMIT,
};

/// Default full embedding width (XLM-R base hidden size).
pub const DEFAULT_D_FULL: usize = 768;
/// Default reduced embedding width after random projection.
pub const DEFAULT_D_RED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Trustworthy,
    Disinformation,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Trustworthy => 0,
            Label::Disinformation => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Trustworthy),
            1 => Some(Label::Disinformation),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Disinformation
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Label::from_u8(v).ok_or_else(|| format!("label must be 0 or 1, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidArgument(format!(
                "unknown split value `{other}`"
            ))),
        }
    }
}

/// One web page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRecord {
    pub page_id: String,
    pub domain: String,
    pub language: String,
    pub text: String,
    pub embedding_full: Option<Vec<f32>>,
    pub embedding_reduced: Option<Vec<f32>>,
    pub categories: BTreeSet<String>,
    pub label: Option<Label>,
    pub split: Split,
}

impl PageRecord {
    pub fn new(
        page_id: impl Into<String>,
        domain: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        PageRecord {
            page_id: page_id.into(),
            domain: domain.into(),
            language: language.into(),
            text: String::new(),
            embedding_full: None,
            embedding_reduced: None,
            categories: BTreeSet::new(),
            label: None,
            split: Split::Unassigned,
        }
    }

    pub fn embedding(&self, field: EmbeddingField) -> Option<&[f32]> {
        match field {
            EmbeddingField::Full => self.embedding_full.as_deref(),
            EmbeddingField::Reduced => self.embedding_reduced.as_deref(),
        }
    }

    pub fn require_embedding(&self, field: EmbeddingField) -> Result<&[f32]> {
        self.embedding(field)
            .ok_or_else(|| Error::MissingEmbedding {
                page_id: self.page_id.clone(),
                field: field.as_str(),
            })
    }

    /// Checks the per-record invariants that do not depend on the manifest.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidRecord {
            page_id: self.page_id.clone(),
            reason: reason.to_string(),
        };
        if self.page_id.is_empty() {
            return Err(invalid("page_id is empty"));
        }
        if self.domain.is_empty() {
            return Err(invalid("domain is empty"));
        }
        for field in [EmbeddingField::Full, EmbeddingField::Reduced] {
            if let Some(v) = self.embedding(field) {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(&format!(
                        "{} embedding has non-finite entries",
                        field.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub name: String,
    pub d_full: usize,
    pub d_red: usize,
    pub n_records: usize,
    pub n_positive: usize,
    pub languages: BTreeMap<String, usize>,
    pub split_counts: BTreeMap<String, usize>,
}

impl CorpusManifest {
    /// Recomputes the counting fields from `records`.
    pub fn from_records(
        name: impl Into<String>,
        d_full: usize,
        d_red: usize,
        records: &[PageRecord],
    ) -> Self {
        let mut languages = BTreeMap::new();
        let mut split_counts = BTreeMap::new();
        let mut n_positive = 0;
        for r in records {
            *languages.entry(r.language.clone()).or_insert(0) += 1;
            *split_counts
                .entry(r.split.as_str().to_string())
                .or_insert(0) += 1;
            if r.label == Some(Label::Disinformation) {
                n_positive += 1;
            }
        }
        CorpusManifest {
            name: name.into(),
            d_full,
            d_red,
            n_records: records.len(),
            n_positive,
            languages,
            split_counts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_full == 0 || self.d_red == 0 {
            return Err(Error::ManifestMismatch(
                "dimensions must be positive".into(),
            ));
        }
        if self.n_positive > self.n_records {
            return Err(Error::ManifestMismatch(format!(
                "n_positive {} exceeds n_records {}",
                self.n_positive, self.n_records
            )));
        }
        for key in self.split_counts.keys() {
            key.parse::<Split>().map_err(|_| {
                Error::ManifestMismatch(format!("unknown split `{key}` in split_counts"))
            })?;
        }
        let split_total: usize = self.split_counts.values().sum();
        if split_total != self.n_records {
            return Err(Error::ManifestMismatch(format!(
                "split counts sum to {split_total}, n_records is {}",
                self.n_records
            )));
        }
        let lang_total: usize = self.languages.values().sum();
        if lang_total != self.n_records {
            return Err(Error::ManifestMismatch(format!(
                "language counts sum to {lang_total}, n_records is {}",
                self.n_records
            )));
        }
        Ok(())
    }

    pub fn positive_share(&self) -> f64 {
        if self.n_records == 0 {
            0.0
        } else {
            self.n_positive as f64 / self.n_records as f64
        }
    }
}

/// Validated record list with its manifest. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    manifest: CorpusManifest,
    records: Vec<PageRecord>,
}

impl Corpus {
    /// Validates every record and derives the manifest.
    pub fn new(
        name: impl Into<String>,
        d_full: usize,
        d_red: usize,
        records: Vec<PageRecord>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !seen.insert(r.page_id.as_str()) {
                return Err(Error::DuplicateId(r.page_id.clone()));
            }
            if let Some(v) = &r.embedding_full {
                if v.len() != d_full {
                    return Err(Error::dims(
                        format!("embedding_full of `{}`", r.page_id),
                        d_full,
                        v.len(),
                    ));
                }
            }
            if let Some(v) = &r.embedding_reduced {
                if v.len() != d_red {
                    return Err(Error::dims(
                        format!("embedding_reduced of `{}`", r.page_id),
                        d_red,
                        v.len(),
                    ));
                }
            }
        }
        let manifest = CorpusManifest::from_records(name, d_full, d_red, &records);
        manifest.validate()?;
        Ok(Corpus { manifest, records })
    }

    /// Builds a corpus, inferring dimensions from the first record carrying each embedding.
    pub fn infer(name: impl Into<String>, records: Vec<PageRecord>) -> Result<Self> {
        let d_full = records
            .iter()
            .find_map(|r| r.embedding_full.as_ref().map(Vec::len))
            .unwrap_or(DEFAULT_D_FULL);
        let d_red = records
            .iter()
            .find_map(|r| r.embedding_reduced.as_ref().map(Vec::len))
            .unwrap_or(DEFAULT_D_RED);
        Corpus::new(name, d_full, d_red, records)
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn records(&self) -> &[PageRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PageRecord> {
        self.records
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, page_id: &str) -> Option<&PageRecord> {
        self.records.iter().find(|r| r.page_id == page_id)
    }

    /// Returns a new corpus with `f` applied to every record.
    pub fn map_records(&self, f: impl FnMut(&PageRecord) -> PageRecord) -> Result<Corpus> {
        let records = self.records.iter().map(f).collect();
        Corpus::new(
            self.manifest.name.clone(),
            self.manifest.d_full,
            self.manifest.d_red,
            records,
        )
    }

    pub fn with_dims(self, d_full: usize, d_red: usize) -> Result<Corpus> {
        Corpus::new(self.manifest.name, d_full, d_red, self.records)
    }
}
