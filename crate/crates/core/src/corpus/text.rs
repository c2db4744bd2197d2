use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_TOKEN_LIMIT: usize = 96;

/// HTML tags contributing to the page text, in decreasing order of importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Title,
    Description,
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
    P,
}

impl Tag {
    pub const ALL: [Tag; 9] = [
        Tag::Title,
        Tag::Description,
        Tag::H1,
        Tag::H2,
        Tag::H3,
        Tag::H4,
        Tag::H5,
        Tag::H6,
        Tag::P,
    ];

    /// Priority rank, 0 = most important.
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Title => "title",
            Tag::Description => "description",
            Tag::H1 => "h1",
            Tag::H2 => "h2",
            Tag::H3 => "h3",
            Tag::H4 => "h4",
            Tag::H5 => "h5",
            Tag::H6 => "h6",
            Tag::P => "p",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tag `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagBlock {
    pub tag: Tag,
    pub content: String,
}

impl TagBlock {
    pub fn new(tag: Tag, content: impl Into<String>) -> Self {
        TagBlock {
            tag,
            content: content.into(),
        }
    }

    /// Builds a block from a raw tag name; names outside the nine known tags are rejected.
    pub fn parse(tag: &str, content: impl Into<String>) -> Result<Self> {
        Ok(TagBlock::new(tag.parse()?, content))
    }
}

/// Concatenates block contents by tag priority, keeping document order within a tag.
///
/// Each content is trimmed; blocks that end up empty are dropped so the output
/// never holds doubled separators.
pub fn assemble_text(blocks: &[TagBlock]) -> String {
    let mut ordered: Vec<&TagBlock> = blocks.iter().collect();
    ordered.sort_by_key(|b| b.tag.rank());
    ordered
        .into_iter()
        .map(|b| b.content.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits text into tokens, reported as byte ranges into the input.
pub trait Tokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Unicode-whitespace splitting.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }
}

pub fn truncate_tokens(text: &str, limit: usize) -> String {
    truncate_tokens_with(text, limit, &WhitespaceTokenizer)
}

/// Returns the prefix of `text` ending with its `limit`-th token.
pub fn truncate_tokens_with(text: &str, limit: usize, tokenizer: &dyn Tokenizer) -> String {
    if limit == 0 {
        return String::new();
    }
    let spans = tokenizer.token_spans(text);
    match spans.get(limit - 1) {
        Some(last) if spans.len() > limit => text[..last.end].to_string(),
        _ => text.to_string(),
    }
}
