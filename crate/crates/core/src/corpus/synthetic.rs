//! Gaussian-cluster corpus generator for desk-scale experiments.
//!
//! Each page's full embedding is
//! `topic_center + language_offset + (class_offset + label * class_shift) * u + noise_scale * noise`,
//! where `u` is one seeded unit direction shared by all topics.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Label, PageRecord, Split};
use crate::error::{Error, Result};
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub d_full: usize,
    /// Per-coordinate standard deviation of the page noise.
    #[serde(default = "one")]
    pub noise_std: f64,
    /// Per-coordinate standard deviation of generated topic centers.
    #[serde(default = "one")]
    pub center_scale: f64,
    /// Per-coordinate standard deviation of generated language offsets.
    #[serde(default)]
    pub language_scale: f64,
    /// Number of publisher domains per class; disinformation and trustworthy pools are disjoint.
    #[serde(default = "default_domains")]
    pub domains_per_class: usize,
    /// Share of each labeled cell assigned to the test split.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub topics: Vec<TopicSpec>,
    pub languages: Vec<LanguageSpec>,
    pub cells: Vec<CellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicSpec {
    pub name: String,
    /// Signed displacement (in embedding norm units) applied to disinformation pages
    /// along the shared class direction.
    #[serde(default)]
    pub class_shift: f64,
    /// Displacement along the class direction applied to every page of the topic.
    #[serde(default)]
    pub class_offset: f64,
    /// Multiplier on `noise_std` for this topic's pages.
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Name of another topic whose center this topic reuses.
    #[serde(default)]
    pub center_of: Option<String>,
    /// Explicit center; generated from the seed when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub code: String,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub topic: String,
    pub language: String,
    pub label: u8,
    pub count: usize,
    /// When false the pages keep their latent class (domain pool, shift) but carry no label.
    #[serde(default = "yes")]
    pub labeled: bool,
    /// Overrides the corpus-wide test share for this cell.
    #[serde(default)]
    pub test_fraction: Option<f64>,
}

fn default_name() -> String {
    "synthetic".into()
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_domains() -> usize {
    20
}
fn default_test_fraction() -> f64 {
    0.2
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidArgument(format!("synthetic spec: {m}"));
        if self.d_full == 0 {
            return Err(bad("d_full must be positive".into()));
        }
        if self.domains_per_class == 0 {
            return Err(bad("domains_per_class must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(bad(format!(
                "test_fraction {} not in [0, 1)",
                self.test_fraction
            )));
        }
        for (what, v) in [
            ("noise_std", self.noise_std),
            ("center_scale", self.center_scale),
            ("language_scale", self.language_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("{what} must be finite and non-negative")));
            }
        }
        if self.topics.is_empty() || self.languages.is_empty() || self.cells.is_empty() {
            return Err(bad("topics, languages and cells must be non-empty".into()));
        }
        let mut names = BTreeSet::new();
        for t in &self.topics {
            if !names.insert(t.name.as_str()) {
                return Err(bad(format!("duplicate topic `{}`", t.name)));
            }
            if let Some(c) = &t.center {
                if c.len() != self.d_full {
                    return Err(Error::dims(
                        format!("center of topic `{}`", t.name),
                        self.d_full,
                        c.len(),
                    ));
                }
            }
            if ![t.class_shift, t.class_offset, t.noise_scale]
                .iter()
                .all(|v| v.is_finite())
                || t.noise_scale < 0.0
            {
                return Err(bad(format!(
                    "topic `{}` has a non-finite shift or negative noise_scale",
                    t.name
                )));
            }
        }
        for t in &self.topics {
            if let Some(other) = &t.center_of {
                if other == &t.name || !names.contains(other.as_str()) {
                    return Err(bad(format!(
                        "topic `{}`: center_of must name another topic",
                        t.name
                    )));
                }
                if t.center.is_some() {
                    return Err(bad(format!(
                        "topic `{}` sets both center and center_of",
                        t.name
                    )));
                }
            }
        }
        let mut codes = BTreeSet::new();
        for l in &self.languages {
            if !codes.insert(l.code.as_str()) {
                return Err(bad(format!("duplicate language `{}`", l.code)));
            }
            if let Some(o) = &l.offset {
                if o.len() != self.d_full {
                    return Err(Error::dims(
                        format!("offset of language `{}`", l.code),
                        self.d_full,
                        o.len(),
                    ));
                }
            }
        }
        for c in &self.cells {
            if c.count == 0 {
                return Err(bad(format!(
                    "cell ({}, {}, {}) has nonpositive count",
                    c.topic, c.language, c.label
                )));
            }
            if c.test_fraction.is_some_and(|f| !(0.0..1.0).contains(&f)) {
                return Err(bad(format!(
                    "cell ({}, {}, {}) test_fraction not in [0, 1)",
                    c.topic, c.language, c.label
                )));
            }
            if c.label > 1 {
                return Err(bad(format!("cell label must be 0 or 1, got {}", c.label)));
            }
            if !names.contains(c.topic.as_str()) {
                return Err(bad(format!("cell references unknown topic `{}`", c.topic)));
            }
            if !codes.contains(c.language.as_str()) {
                return Err(bad(format!(
                    "cell references unknown language `{}`",
                    c.language
                )));
            }
        }
        Ok(())
    }

    pub fn total_pages(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }
}

fn gaussian_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Generates the corpus described by `spec`. Output is a pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<PageRecord>> {
    spec.validate()?;
    let d = spec.d_full;

    let mut geometry = seeded_rng(derive_seed(seed, b"geometry"));
    let centers: Vec<Vec<f64>> = spec
        .topics
        .iter()
        .map(|t| {
            t.center
                .clone()
                .unwrap_or_else(|| gaussian_vec(&mut geometry, d, spec.center_scale))
        })
        .collect();
    let offsets: Vec<Vec<f64>> = spec
        .languages
        .iter()
        .map(|l| {
            l.offset
                .clone()
                .unwrap_or_else(|| gaussian_vec(&mut geometry, d, spec.language_scale))
        })
        .collect();
    let mut direction = gaussian_vec(&mut geometry, d, 1.0);
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);
    let topic_center: Vec<usize> = spec
        .topics
        .iter()
        .enumerate()
        .map(|(i, t)| match &t.center_of {
            Some(other) => spec
                .topics
                .iter()
                .position(|u| &u.name == other)
                .expect("validated"),
            None => i,
        })
        .collect();

    // Domain pools: a seeded permutation of neutral names, split between the classes.
    let n_dom = spec.domains_per_class;
    let mut ids: Vec<usize> = (0..2 * n_dom).collect();
    ids.shuffle(&mut geometry);
    let pool = |label: u8, k: usize| format!("pub{:03}.example", ids[label as usize * n_dom + k]);

    let mut pages = seeded_rng(derive_seed(seed, b"pages"));
    let mut records = Vec::with_capacity(spec.total_pages());
    for cell in &spec.cells {
        let ti = spec
            .topics
            .iter()
            .position(|t| t.name == cell.topic)
            .expect("validated");
        let li = spec
            .languages
            .iter()
            .position(|l| l.code == cell.language)
            .expect("validated");
        let topic = &spec.topics[ti];
        let shift = topic.class_offset
            + if cell.label == 1 {
                topic.class_shift
            } else {
                0.0
            };
        let noise_std = spec.noise_std * topic.noise_scale;
        let center = &centers[topic_center[ti]];

        let mut splits = vec![Split::Unassigned; cell.count];
        if cell.labeled {
            let frac = cell.test_fraction.unwrap_or(spec.test_fraction);
            let n_test = (cell.count as f64 * frac).round() as usize;
            splits.iter_mut().enumerate().for_each(|(i, s)| {
                *s = if i < n_test {
                    Split::Test
                } else {
                    Split::Train
                };
            });
            splits.shuffle(&mut pages);
        }

        for split in splits {
            let n = records.len();
            let emb: Vec<f32> = (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut pages);
                    (center[j] + offsets[li][j] + shift * direction[j] + noise_std * z) as f32
                })
                .collect();
            let domain = pool(cell.label, pages.random_range(0..n_dom));
            let mut r = PageRecord::new(format!("p{n:06}"), domain, cell.language.clone());
            r.text = format!("{} page {n} ({})", cell.topic, cell.language);
            r.embedding_full = Some(emb);
            r.categories.insert(cell.topic.clone());
            r.label = if cell.labeled {
                Label::from_u8(cell.label)
            } else {
                None
            };
            r.split = split;
            records.push(r);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_corpus, Corpus};

    fn two_topic_spec(shift: f64) -> SyntheticSpec {
        SyntheticSpec {
            name: "t".into(),
            d_full: 16,
            noise_std: 1.0,
            center_scale: 1.0,
            language_scale: 0.2,
            domains_per_class: 3,
            test_fraction: 0.2,
            topics: vec![
                TopicSpec {
                    name: "topicA".into(),
                    class_shift: shift,
                    class_offset: 0.0,
                    noise_scale: 1.0,
                    center_of: None,
                    center: None,
                },
                TopicSpec {
                    name: "topicB".into(),
                    class_shift: shift,
                    class_offset: 0.0,
                    noise_scale: 1.0,
                    center_of: None,
                    center: None,
                },
            ],
            languages: vec![
                LanguageSpec {
                    code: "en".into(),
                    offset: None,
                },
                LanguageSpec {
                    code: "fr".into(),
                    offset: None,
                },
            ],
            cells: vec![
                CellSpec {
                    topic: "topicA".into(),
                    language: "en".into(),
                    label: 1,
                    count: 5,
                    labeled: true,
                    test_fraction: None,
                },
                CellSpec {
                    topic: "topicA".into(),
                    language: "fr".into(),
                    label: 0,
                    count: 5,
                    labeled: true,
                    test_fraction: None,
                },
                CellSpec {
                    topic: "topicB".into(),
                    language: "en".into(),
                    label: 0,
                    count: 10,
                    labeled: false,
                    test_fraction: None,
                },
            ],
        }
    }

    #[test]
    fn deterministic_output() {
        let spec = two_topic_spec(2.0);
        let a = Corpus::infer("a", generate_synthetic_corpus(&spec, 7).unwrap()).unwrap();
        let b = Corpus::infer("a", generate_synthetic_corpus(&spec, 7).unwrap()).unwrap();
        assert_eq!(write_corpus(&a), write_corpus(&b));
        let c = Corpus::infer("a", generate_synthetic_corpus(&spec, 8).unwrap()).unwrap();
        assert_ne!(write_corpus(&a), write_corpus(&c));
    }

    #[test]
    fn cell_counts_honored() {
        let records = generate_synthetic_corpus(&two_topic_spec(2.0), 7).unwrap();
        assert_eq!(records.len(), 20);
        let n = records
            .iter()
            .filter(|r| {
                r.categories.contains("topicA")
                    && r.language == "en"
                    && r.label == Some(Label::Disinformation)
            })
            .count();
        assert_eq!(n, 5);
        let unlabeled = records.iter().filter(|r| r.label.is_none()).count();
        assert_eq!(unlabeled, 10);
        assert!(records
            .iter()
            .filter(|r| r.label.is_none())
            .all(|r| r.split == Split::Unassigned));
        assert_eq!(records.iter().filter(|r| r.split == Split::Test).count(), 2);
    }

    #[test]
    fn domain_pools_are_disjoint() {
        let records = generate_synthetic_corpus(&two_topic_spec(2.0), 3).unwrap();
        let pos: BTreeSet<_> = records
            .iter()
            .filter(|r| r.label == Some(Label::Disinformation))
            .map(|r| &r.domain)
            .collect();
        let neg: BTreeSet<_> = records
            .iter()
            .filter(|r| r.label == Some(Label::Trustworthy))
            .map(|r| &r.domain)
            .collect();
        assert!(pos.is_disjoint(&neg));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = two_topic_spec(1.0);
        s.cells[0].count = 0;
        assert!(generate_synthetic_corpus(&s, 1).is_err());
        let mut s = two_topic_spec(1.0);
        s.topics[0].center = Some(vec![0.0; 3]);
        assert!(matches!(
            generate_synthetic_corpus(&s, 1).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        let mut s = two_topic_spec(1.0);
        s.cells[0].topic = "nope".into();
        assert!(generate_synthetic_corpus(&s, 1).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            d_full = 8
            language_scale = 0.5
            [[topics]]
            name = "health"
            class_shift = 3.0
            [[languages]]
            code = "en"
            [[cells]]
            topic = "health"
            language = "en"
            label = 1
            count = 4
        "#;
        let spec: SyntheticSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.noise_std, 1.0);
        assert_eq!(generate_synthetic_corpus(&spec, 1).unwrap().len(), 4);
    }
}
