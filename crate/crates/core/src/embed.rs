//! Embedding acquisition and Gaussian random projection.

use std::io::{Cursor, Read};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Corpus, DEFAULT_D_RED};
use crate::error::{Error, Result};
use crate::util::{self, derive_seed, seeded_rng, GENERATOR_NAME};

/// Source of page embeddings.
pub trait Embedder {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Returns exactly `dimension()` finite values.
    fn embed(&self, text: &str, language: &str) -> Vec<f32>;
}

/// Deterministic stand-in for a multilingual encoder.
///
/// The content part is a bag of hashed token vectors, so texts sharing words share
/// components. `lang_weight` blends in a per-language offset: 0 gives a
/// language-agnostic space, values near 1 a language-dominated one.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    pub dimension: usize,
    pub seed: u64,
    pub lang_weight: f64,
    name: String,
}

impl SyntheticEmbedder {
    pub fn new(dimension: usize, seed: u64, lang_weight: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&lang_weight) {
            return Err(Error::InvalidArgument(format!(
                "lang_weight {lang_weight} not in [0, 1]"
            )));
        }
        Ok(SyntheticEmbedder {
            dimension,
            seed,
            lang_weight,
            name: format!("synthetic(d={dimension},lang={lang_weight})"),
        })
    }
}

impl Embedder for SyntheticEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str, language: &str) -> Vec<f32> {
        synthetic_embed(text, language, self.dimension, self.seed, self.lang_weight)
    }
}

fn hashed_gaussian(seed: u64, stream: &[u8], dimension: usize) -> impl Iterator<Item = f64> {
    let mut rng = seeded_rng(derive_seed(seed, stream));
    (0..dimension).map(move |_| StandardNormal.sample(&mut rng))
}

pub fn synthetic_embed(
    text: &str,
    language: &str,
    dimension: usize,
    seed: u64,
    lang_weight: f64,
) -> Vec<f32> {
    let mut content = vec![0.0f64; dimension];
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        for (c, z) in content
            .iter_mut()
            .zip(hashed_gaussian(seed, b"empty\0", dimension))
        {
            *c = z;
        }
    } else {
        let scale = 1.0 / (tokens.len() as f64).sqrt();
        for tok in &tokens {
            let key = [b"tok\0".as_slice(), tok.as_bytes()].concat();
            for (c, z) in content
                .iter_mut()
                .zip(hashed_gaussian(seed, &key, dimension))
            {
                *c += z * scale;
            }
        }
    }
    if lang_weight > 0.0 {
        let key = [b"lang\0".as_slice(), language.as_bytes()].concat();
        content
            .iter_mut()
            .zip(hashed_gaussian(seed, &key, dimension))
            .map(|(c, l)| ((1.0 - lang_weight) * *c + lang_weight * l) as f32)
            .collect()
    } else {
        content.into_iter().map(|c| c as f32).collect()
    }
}

/// Embeds every record's text into `embedding_full`.
pub fn embed_corpus(corpus: &Corpus, embedder: &dyn Embedder) -> Result<Corpus> {
    let d = embedder.dimension();
    let records = corpus
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.embedding_full = Some(embedder.embed(&r.text, &r.language));
            r
        })
        .collect();
    Corpus::new(corpus.name(), d, corpus.manifest().d_red, records)
}

/// Dense `d_red x d_full` Gaussian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    d_full: usize,
    d_red: usize,
    seed: u64,
    scale: f64,
    entries: Vec<f32>,
}

const PROJECTION_MAGIC: &[u8; 8] = b"REDDPRJ1";

/// Draws entries i.i.d. from N(0, 1/d_red).
pub fn make_projection(d_full: usize, d_red: usize, seed: u64) -> Result<ProjectionMatrix> {
    if d_red == 0 || d_full == 0 {
        return Err(Error::InvalidArgument(
            "projection dimensions must be positive".into(),
        ));
    }
    if d_red > d_full {
        return Err(Error::InvalidArgument(format!(
            "d_red ({d_red}) must not exceed d_full ({d_full})"
        )));
    }
    let scale = 1.0 / (d_red as f64).sqrt();
    let mut rng = seeded_rng(seed);
    let entries = (0..d_full * d_red)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * scale) as f32
        })
        .collect();
    Ok(ProjectionMatrix {
        d_full,
        d_red,
        seed,
        scale,
        entries,
    })
}

impl ProjectionMatrix {
    pub fn rows(&self) -> usize {
        self.d_red
    }

    pub fn cols(&self) -> usize {
        self.d_full
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn entries(&self) -> &[f32] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.entries[i * self.d_full..(i + 1) * self.d_full]
    }

    /// Plain matrix-vector product, accumulated in f64.
    pub fn project(&self, v: &[f32]) -> Result<Vec<f32>> {
        if v.len() != self.d_full {
            return Err(Error::dims("projection input", self.d_full, v.len()));
        }
        Ok((0..self.d_red)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .map(|(&a, &x)| f64::from(a) * f64::from(x))
                    .sum::<f64>() as f32
            })
            .collect())
    }

    /// Fills `embedding_reduced` for every record that has a full embedding.
    pub fn project_corpus(&self, corpus: &Corpus) -> Result<Corpus> {
        if corpus.manifest().d_full != self.d_full {
            return Err(Error::dims(
                "corpus d_full vs projection",
                self.d_full,
                corpus.manifest().d_full,
            ));
        }
        let mut records = Vec::with_capacity(corpus.len());
        for r in corpus.records() {
            let mut r = r.clone();
            if let Some(full) = &r.embedding_full {
                r.embedding_reduced = Some(self.project(full)?);
            }
            records.push(r);
        }
        Corpus::new(corpus.name(), self.d_full, self.d_red, records)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.entries.len());
        out.extend_from_slice(PROJECTION_MAGIC);
        out.extend_from_slice(&(self.d_full as u64).to_le_bytes());
        out.extend_from_slice(&(self.d_red as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.scale.to_le_bytes());
        out.extend_from_slice(&(GENERATOR_NAME.len() as u32).to_le_bytes());
        out.extend_from_slice(GENERATOR_NAME.as_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out
    }

    /// Parses a projection file and checks the stored entries against a regeneration from the header.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::Format(format!("projection file: {m}"));
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)
            .map_err(|_| fmt("truncated header"))?;
        if &magic != PROJECTION_MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |cur: &mut Cursor<&[u8]>| -> Result<u64> {
            cur.read_exact(&mut u64buf)
                .map_err(|_| fmt("truncated header"))?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let d_full = read_u64(&mut cur)? as usize;
        let d_red = read_u64(&mut cur)? as usize;
        let seed = read_u64(&mut cur)?;
        let scale = f64::from_bits(read_u64(&mut cur)?);
        let mut lenbuf = [0u8; 4];
        cur.read_exact(&mut lenbuf)
            .map_err(|_| fmt("truncated header"))?;
        let mut name = vec![0u8; u32::from_le_bytes(lenbuf) as usize];
        cur.read_exact(&mut name)
            .map_err(|_| fmt("truncated generator name"))?;
        if name != GENERATOR_NAME.as_bytes() {
            return Err(fmt(&format!(
                "unsupported generator `{}`",
                String::from_utf8_lossy(&name)
            )));
        }
        let body = &bytes[cur.position() as usize..];
        let n = d_full
            .checked_mul(d_red)
            .ok_or_else(|| fmt("dimensions overflow"))?;
        if body.len() != 4 * n {
            return Err(fmt(&format!(
                "expected {} entry bytes, found {}",
                4 * n,
                body.len()
            )));
        }
        let stored: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        let regenerated = make_projection(d_full, d_red, seed)?;
        if regenerated.scale.to_bits() != scale.to_bits() || regenerated.entries != stored {
            return Err(fmt("entries do not match regeneration from header"));
        }
        Ok(regenerated)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&util::read_bytes(path)?)
    }
}

/// Default projection used by the pipeline when no explicit width is configured.
pub fn default_projection(d_full: usize, seed: u64) -> Result<ProjectionMatrix> {
    make_projection(d_full, DEFAULT_D_RED.min(d_full), seed)
}
