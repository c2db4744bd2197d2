//! Deterministic synthetic fixtures shared by tests, experiments and the pipeline defaults.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{CellSpec, Label, LanguageSpec, PageRecord, Split, SyntheticSpec, TopicSpec};
use crate::util::seeded_rng;

fn labeled_page(i: usize, v: Vec<f32>, label: Label, split: Split) -> PageRecord {
    let mut p = PageRecord::new(format!("p{i:05}"), format!("d{:03}.example", i % 97), "en");
    p.embedding_reduced = Some(v);
    p.label = Some(label);
    p.split = split;
    p
}

/// Two linearly separable Gaussian blobs at `±separation/2` along a random unit direction.
/// Every fourth page is a test page.
pub fn separable_blobs(n: usize, dim: usize, separation: f64, seed: u64) -> Vec<PageRecord> {
    let mut rng = seeded_rng(seed);
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x /= norm);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Disinformation
            } else {
                Label::Trustworthy
            };
            let sign = if label.is_positive() { 0.5 } else { -0.5 };
            let v = dir
                .iter()
                .map(|&d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (sign * separation * d + z) as f32
                })
                .collect();
            labeled_page(
                i,
                v,
                label,
                if (i / 2) % 4 == 3 {
                    Split::Test
                } else {
                    Split::Train
                },
            )
        })
        .collect()
}

fn jitter(rng: &mut impl Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    0.15 * z
}

/// Two concentric rings in the first two coordinates (inner radius 1 trustworthy,
/// outer radius 2 disinformation) with small Gaussian jitter; the remaining
/// coordinates carry low-variance noise. Every fourth page is a test page.
pub fn concentric_rings(n: usize, dim: usize, seed: u64) -> Vec<PageRecord> {
    assert!(dim >= 2, "rings need at least two dimensions");
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Disinformation
            } else {
                Label::Trustworthy
            };
            let radius = if label.is_positive() { 2.0 } else { 1.0 };
            let angle = rng.random_range(0.0..TAU);
            let mut v = Vec::with_capacity(dim);
            v.push((radius * angle.cos() + jitter(&mut rng)) as f32);
            v.push((radius * angle.sin() + jitter(&mut rng)) as f32);
            for _ in 2..dim {
                v.push(jitter(&mut rng) as f32);
            }
            labeled_page(
                i,
                v,
                label,
                if (i / 2) % 4 == 3 {
                    Split::Test
                } else {
                    Split::Train
                },
            )
        })
        .collect()
}

/// On-topic category used by [`ablation_spec`].
pub const ABLATION_TOPIC: &str = "health";

const OFF_TOPICS: [&str; 3] = ["fitness", "nutrition", "lifestyle"];

/// Class shift of the on-topic stratum, in units of per-coordinate noise.
pub const ABLATION_SHIFT: f64 = 12.0;

/// Bucket edges used with [`ablation_spec`]: 0.025 steps from 0.5 to 1.
pub fn fine_bucket_edges() -> Vec<f64> {
    (0..=20).map(|i| (500 + 25 * i) as f64 / 1000.0).collect()
}

/// Topic-filter ablation corpus.
///
/// The on-topic stratum separates the classes by [`ABLATION_SHIFT`] along the
/// class direction. Three off-topic strata share its center but are more diffuse
/// (noise x1.35, so cosine to the topic centroid drops) and place the classes the
/// other way round along the same direction. Off-topic pages are train-only.
/// Cosine similarity sees the diffusion directly; a classifier has to learn a
/// norm-like feature to tell the strata apart, and until it does the off-topic
/// majority pulls its ranking backwards.
pub fn ablation_spec() -> SyntheticSpec {
    let languages = ["en", "fr", "de"];
    let mut topics = vec![TopicSpec {
        name: ABLATION_TOPIC.into(),
        class_shift: ABLATION_SHIFT,
        class_offset: 0.0,
        noise_scale: 1.0,
        center_of: None,
        center: None,
    }];
    for name in OFF_TOPICS {
        topics.push(TopicSpec {
            name: name.into(),
            class_shift: -ABLATION_SHIFT,
            class_offset: ABLATION_SHIFT,
            noise_scale: 1.35,
            center_of: Some(ABLATION_TOPIC.into()),
            center: None,
        });
    }
    let mut cells = Vec::new();
    for t in &topics {
        for lang in languages {
            for label in [0u8, 1] {
                cells.push(CellSpec {
                    topic: t.name.clone(),
                    language: lang.into(),
                    label,
                    count: 100,
                    labeled: true,
                    test_fraction: (t.name != ABLATION_TOPIC).then_some(0.0),
                });
            }
        }
    }
    SyntheticSpec {
        name: "ablation".into(),
        d_full: 768,
        noise_std: 1.0,
        center_scale: 2.43,
        language_scale: 0.3,
        domains_per_class: 40,
        test_fraction: 0.25,
        topics,
        languages: languages
            .iter()
            .map(|l| LanguageSpec {
                code: l.to_string(),
                offset: None,
            })
            .collect(),
        cells,
    }
}

/// Noise level for `clustered_spec` at which 768-dim neighbourhoods are still clean;
/// past about 1.75 the 100-dim projection starts losing same-category neighbours.
pub const CLUSTERED_NOISE_STD: f64 = 1.5;

/// Clustered corpus for embedding-quality checks: `n_categories` topic clusters,
/// `pages_per_category` pages each, single category per page.
pub fn clustered_spec(
    n_categories: usize,
    pages_per_category: usize,
    d_full: usize,
    noise_std: f64,
) -> SyntheticSpec {
    let topics: Vec<TopicSpec> = (0..n_categories)
        .map(|i| TopicSpec {
            name: format!("cat{i}"),
            class_shift: 0.0,
            class_offset: 0.0,
            noise_scale: 1.0,
            center_of: None,
            center: None,
        })
        .collect();
    let cells = topics
        .iter()
        .map(|t| CellSpec {
            topic: t.name.clone(),
            language: "en".into(),
            label: 0,
            count: pages_per_category,
            labeled: true,
            test_fraction: None,
        })
        .collect();
    SyntheticSpec {
        name: "clustered".into(),
        d_full,
        noise_std,
        center_scale: 1.0,
        language_scale: 0.0,
        domains_per_class: 10,
        test_fraction: 0.0,
        topics,
        languages: vec![LanguageSpec {
            code: "en".into(),
            offset: None,
        }],
        cells,
    }
}
