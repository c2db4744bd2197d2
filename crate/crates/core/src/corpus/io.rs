use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusManifest, Label, PageRecord, Split};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingField {
    Full,
    Reduced,
}

impl EmbeddingField {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingField::Full => "full",
            EmbeddingField::Reduced => "reduced",
        }
    }
}

impl std::str::FromStr for EmbeddingField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EmbeddingField::Full),
            "reduced" => Ok(EmbeddingField::Reduced),
            other => Err(Error::InvalidArgument(format!(
                "unknown embedding field `{other}`"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    page_id: String,
    domain: String,
    language: String,
    text: String,
    embedding_full: Option<Vec<f32>>,
    embedding_reduced: Option<Vec<f32>>,
    categories: Vec<String>,
    label: Option<u8>,
    split: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    manifest: CorpusManifest,
}

impl RecordLine {
    fn from_record(r: &PageRecord) -> Self {
        RecordLine {
            page_id: r.page_id.clone(),
            domain: r.domain.clone(),
            language: r.language.clone(),
            text: r.text.clone(),
            embedding_full: r.embedding_full.clone(),
            embedding_reduced: r.embedding_reduced.clone(),
            categories: r.categories.iter().cloned().collect(),
            label: r.label.map(Label::as_u8),
            split: match r.split {
                Split::Unassigned => None,
                s => Some(s.as_str().to_string()),
            },
        }
    }

    fn into_record(self, line: usize) -> Result<PageRecord> {
        let malformed = |message: String| Error::Malformed { line, message };
        let label = match self.label {
            None => None,
            Some(v) => Some(
                Label::from_u8(v)
                    .ok_or_else(|| malformed(format!("label must be 0, 1 or null, got {v}")))?,
            ),
        };
        let split = match self.split.as_deref() {
            None => Split::Unassigned,
            Some("train") => Split::Train,
            Some("test") => Split::Test,
            Some(other) => return Err(malformed(format!("unknown split value `{other}`"))),
        };
        Ok(PageRecord {
            page_id: self.page_id,
            domain: self.domain,
            language: self.language,
            text: self.text,
            embedding_full: self.embedding_full,
            embedding_reduced: self.embedding_reduced,
            categories: self.categories.into_iter().collect::<BTreeSet<_>>(),
            label,
            split,
        })
    }
}

/// Parses the line-delimited record format. `name` is used when no manifest line is present.
pub fn parse_corpus(input: &str, name: &str) -> Result<Corpus> {
    let mut embedded: Option<CorpusManifest> = None;
    let mut records = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if line == 1 && raw.trim_start().starts_with("{\"manifest\"") {
            let m: ManifestLine = serde_json::from_str(raw).map_err(|e| Error::Malformed {
                line,
                message: format!("bad manifest: {e}"),
            })?;
            embedded = Some(m.manifest);
            continue;
        }
        let rec: RecordLine = serde_json::from_str(raw).map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        let rec = rec.into_record(line)?;
        rec.validate().map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        records.push(rec);
    }

    let corpus = match &embedded {
        Some(m) => Corpus::new(m.name.clone(), m.d_full, m.d_red, records)?,
        None => Corpus::infer(name, records)?,
    };
    if let Some(m) = embedded {
        if &m != corpus.manifest() {
            return Err(Error::ManifestMismatch(format!(
                "embedded manifest {:?} disagrees with recomputed {:?}",
                m,
                corpus.manifest()
            )));
        }
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = util::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    parse_corpus(&text, &name)
}

/// Serializes a corpus: manifest line first, then one record per line.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    let manifest = ManifestLine {
        manifest: corpus.manifest().clone(),
    };
    out.push_str(&serde_json::to_string(&manifest).expect("manifest serializes"));
    out.push('\n');
    for r in corpus.records() {
        let line = serde_json::to_string(&RecordLine::from_record(r)).expect("record serializes");
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    util::write_atomic(path, write_corpus(corpus).as_bytes())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingLine {
    page_id: String,
    embedding: Vec<f32>,
}

/// Attaches externally computed embeddings (one `{"page_id", "embedding"}` object per line)
/// to the matching records. Every page in the file must exist in the corpus.
pub fn import_embeddings(corpus: &Corpus, input: &str, field: EmbeddingField) -> Result<Corpus> {
    let mut by_id: HashMap<String, Vec<f32>> = HashMap::new();
    let mut dim = None;
    for (idx, raw) in input.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let e: EmbeddingLine = serde_json::from_str(raw).map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        match dim {
            None => dim = Some(e.embedding.len()),
            Some(d) if d != e.embedding.len() => {
                return Err(Error::dims(
                    format!("imported embedding on line {line}"),
                    d,
                    e.embedding.len(),
                ))
            }
            _ => {}
        }
        if corpus.get(&e.page_id).is_none() {
            return Err(Error::Malformed {
                line,
                message: format!("page `{}` not in corpus", e.page_id),
            });
        }
        if by_id.insert(e.page_id.clone(), e.embedding).is_some() {
            return Err(Error::DuplicateId(e.page_id));
        }
    }
    let records: Vec<PageRecord> = corpus
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(v) = by_id.remove(&r.page_id) {
                match field {
                    EmbeddingField::Full => r.embedding_full = Some(v),
                    EmbeddingField::Reduced => r.embedding_reduced = Some(v),
                }
            }
            r
        })
        .collect();
    let m = corpus.manifest();
    let (mut d_full, mut d_red) = (m.d_full, m.d_red);
    if let Some(d) = dim {
        match field {
            EmbeddingField::Full => d_full = d,
            EmbeddingField::Reduced => d_red = d,
        }
    }
    Corpus::new(m.name.clone(), d_full, d_red, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THREE: &str = r#"{"page_id":"a","domain":"x.org","language":"en","text":"hello","embedding_full":null,"embedding_reduced":[1.0,0.0],"categories":["news"],"label":1,"split":"train"}
{"page_id":"b","domain":"x.org","language":"fr","text":"","embedding_full":null,"embedding_reduced":[0.5,0.5],"categories":[],"label":0,"split":"test"}
{"page_id":"c","domain":"y.org","language":"en","text":"world","embedding_full":null,"embedding_reduced":null,"categories":[],"label":null,"split":null}
"#;

    #[test]
    fn loads_three_lines() {
        let c = parse_corpus(THREE, "three").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.manifest().n_records, 3);
        assert_eq!(c.manifest().d_red, 2);
        assert_eq!(c.records()[2].split, Split::Unassigned);
    }

    #[test]
    fn duplicate_id_named() {
        let dup = format!("{}{}", THREE, THREE.lines().next().unwrap());
        let err = parse_corpus(&dup, "d").unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "a"), "{err}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let bad = THREE.replace("\"label\":0", "\"label\":7");
        match parse_corpus(&bad, "x").unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let bad = THREE.replace("\"split\":\"test\"", "\"split\":\"dev\"");
        assert!(matches!(
            parse_corpus(&bad, "x").unwrap_err(),
            Error::Malformed { line: 2, .. }
        ));
        let bad = format!("{THREE}not json\n");
        assert!(matches!(
            parse_corpus(&bad, "x").unwrap_err(),
            Error::Malformed { line: 4, .. }
        ));
        let bad = THREE.replace("\"text\":\"hello\",", "\"text\":\"hello\",\"extra\":1,");
        assert!(matches!(
            parse_corpus(&bad, "x").unwrap_err(),
            Error::Malformed { line: 1, .. }
        ));
    }

    #[test]
    fn manifest_dimension_mismatch() {
        let c = parse_corpus(THREE, "three").unwrap();
        let mut text = write_corpus(&c);
        text = text.replacen("\"d_red\":2", "\"d_red\":3", 1);
        assert!(matches!(
            parse_corpus(&text, "x").unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn manifest_count_mismatch() {
        let c = parse_corpus(THREE, "three").unwrap();
        let text = write_corpus(&c).replacen("\"n_positive\":1", "\"n_positive\":0", 1);
        assert!(matches!(
            parse_corpus(&text, "x").unwrap_err(),
            Error::ManifestMismatch(_)
        ));
    }

    #[test]
    fn import_attaches_vectors() {
        let c = parse_corpus(THREE, "three").unwrap();
        let emb = "{\"page_id\":\"a\",\"embedding\":[1,2,3]}\n{\"page_id\":\"c\",\"embedding\":[4,5,6]}\n";
        let c2 = import_embeddings(&c, emb, EmbeddingField::Full).unwrap();
        assert_eq!(c2.manifest().d_full, 3);
        assert_eq!(
            c2.get("c").unwrap().embedding_full.as_deref(),
            Some(&[4.0, 5.0, 6.0][..])
        );
        assert!(c2.get("b").unwrap().embedding_full.is_none());
        let bad = "{\"page_id\":\"zzz\",\"embedding\":[1]}\n";
        assert!(import_embeddings(&c, bad, EmbeddingField::Full).is_err());
    }

    fn arb_record(i: usize) -> impl Strategy<Value = PageRecord> {
        (
            "[a-z]{1,6}\\.org",
            prop::sample::select(vec!["en", "fr", "de"]),
            "[ -~é]{0,20}",
            prop::option::of(prop::collection::vec(-1e6f32..1e6f32, 4)),
            prop::option::of(prop::collection::vec(
                any::<f32>().prop_filter("finite", |x| x.is_finite()),
                2,
            )),
            prop::collection::btree_set("[a-z/]{1,8}", 0..3),
            prop::option::of(prop::bool::ANY),
            0usize..3,
        )
            .prop_map(move |(domain, lang, text, full, red, cats, label, split)| {
                PageRecord {
                    page_id: format!("p{i}"),
                    domain,
                    language: lang.to_string(),
                    text,
                    embedding_full: full,
                    embedding_reduced: red,
                    categories: cats,
                    label: label.map(|b| {
                        if b {
                            Label::Disinformation
                        } else {
                            Label::Trustworthy
                        }
                    }),
                    split: [Split::Train, Split::Test, Split::Unassigned][split],
                }
            })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(records in (0usize..8).prop_flat_map(|n| (0..n).map(arb_record).collect::<Vec<_>>())) {
            let c = Corpus::new("rt", 4, 2, records).unwrap();
            let text = write_corpus(&c);
            let back = parse_corpus(&text, "ignored").unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
