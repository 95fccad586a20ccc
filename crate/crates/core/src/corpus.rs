//! Review ingestion and cleaning.
//!
//! Reviews arrive as a two-column CSV (`review,sentiment`). Cleaning runs in a
//! fixed order: optional HTML/URL stripping, lowercasing, non-word characters to
//! spaces, digit deletion, whitespace collapse and trim. Tokens are the
//! whitespace-separated words that survive stopword filtering.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stopword list shipped with the crate.
pub const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header `review,sentiment`, found `{found}`")]
    Header { path: PathBuf, found: String },
    #[error("{path}: row {row}: sentiment `{value}` is neither `positive` nor `negative`")]
    Label {
        path: PathBuf,
        row: u64,
        value: String,
    },
    #[error("{path}: row {row}: expected 2 fields, found {found}")]
    FieldCount { path: PathBuf, row: u64, found: usize },
    #[error("stopword file {0} is empty")]
    EmptyStopwords(PathBuf),
    #[error("corpus of {0} documents is too small to populate train, valid and test folds (need at least 10)")]
    TooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Positive,
}

impl Sentiment {
    /// Accepts the two literals after trimming and ASCII case folding.
    pub fn parse(raw: &str) -> Option<Self> {
        let norm = raw.trim().to_ascii_lowercase();
        match norm.as_str() {
            "positive" => Some(Sentiment::Positive),
            "negative" => Some(Sentiment::Negative),
            _ => None,
        }
    }

    /// negative → 0, positive → 1.
    pub fn as_label(self) -> u8 {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            Sentiment::Negative
        } else {
            Sentiment::Positive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReview {
    pub text: String,
    pub label: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// Delete `<...>` spans and `http(s)://` runs before the non-word pass.
    pub strip_html_urls: bool,
    pub lowercase: bool,
    pub remove_stopwords: bool,
    /// `None` selects the built-in list.
    pub stopword_path: Option<PathBuf>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            strip_html_urls: false,
            lowercase: true,
            remove_stopwords: true,
            stopword_path: None,
        }
    }
}

impl CleanConfig {
    /// Loads the stopword set this configuration asks for. Empty when
    /// filtering is disabled.
    pub fn stopwords(&self) -> Result<HashSet<String>, CorpusError> {
        if !self.remove_stopwords {
            return Ok(HashSet::new());
        }
        match &self.stopword_path {
            None => Ok(parse_stopwords(BUILTIN_STOPWORDS)),
            Some(path) => load_stopwords(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedDoc {
    pub tokens: Vec<String>,
    /// 0 = negative, 1 = positive.
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<CleanedDoc>,
    pub valid: Vec<CleanedDoc>,
    pub test: Vec<CleanedDoc>,
}

impl CorpusSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a `review,sentiment` CSV. The header match is case-insensitive.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawReview>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(file, path)
}

/// Same as [`load_corpus`] over any reader; `origin` is used in error messages.
pub fn read_corpus<R: std::io::Read>(
    reader: R,
    origin: &Path,
) -> Result<Vec<RawReview>, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: origin.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(csv_err)?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names != ["review", "sentiment"] {
        return Err(CorpusError::Header {
            path: origin.to_path_buf(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // 1-based data row number (header excluded).
        let row = idx as u64 + 1;
        if record.len() != 2 {
            return Err(CorpusError::FieldCount {
                path: origin.to_path_buf(),
                row,
                found: record.len(),
            });
        }
        let label = Sentiment::parse(&record[1]).ok_or_else(|| CorpusError::Label {
            path: origin.to_path_buf(),
            row,
            value: record[1].to_string(),
        })?;
        out.push(RawReview {
            text: record[0].to_string(),
            label,
        });
    }
    Ok(out)
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)https?://\S*").unwrap());
static NON_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^A-Za-z0-9]").unwrap());
static DIGIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9]").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" {2,}").unwrap());

/// Applies the cleaning rules to one review. Total and idempotent.
///
/// Word characters are ASCII letters and digits; everything else, including
/// non-ASCII letters, becomes a space.
pub fn clean_text(raw: &str, cfg: &CleanConfig) -> String {
    let mut text = std::borrow::Cow::Borrowed(raw);
    if cfg.strip_html_urls {
        let no_tags = HTML_TAG.replace_all(&text, " ").into_owned();
        text = std::borrow::Cow::Owned(URL.replace_all(&no_tags, " ").into_owned());
    }
    let lowered = if cfg.lowercase {
        text.to_ascii_lowercase()
    } else {
        text.into_owned()
    };
    let spaced = NON_WORD.replace_all(&lowered, " ");
    let no_digits = DIGIT.replace_all(&spaced, "");
    let collapsed = SPACES.replace_all(&no_digits, " ");
    collapsed.trim_matches(' ').to_string()
}

/// Keeps the tokens not in `stopwords`, in their original order.
pub fn filter_stopwords<S: AsRef<str>>(tokens: &[S], stopwords: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

/// Cleans, tokenizes and filters a single text.
pub fn tokenize(raw: &str, cfg: &CleanConfig, stopwords: &HashSet<String>) -> Vec<String> {
    let cleaned = clean_text(raw, cfg);
    let tokens: Vec<&str> = cleaned.split(' ').filter(|t| !t.is_empty()).collect();
    filter_stopwords(&tokens, stopwords)
}

pub fn clean_review(review: &RawReview, cfg: &CleanConfig, stopwords: &HashSet<String>) -> CleanedDoc {
    CleanedDoc {
        tokens: tokenize(&review.text, cfg, stopwords),
        label: review.label.as_label(),
    }
}

pub fn clean_corpus(
    reviews: &[RawReview],
    cfg: &CleanConfig,
) -> Result<Vec<CleanedDoc>, CorpusError> {
    let stopwords = cfg.stopwords()?;
    Ok(reviews
        .iter()
        .map(|r| clean_review(r, cfg, &stopwords))
        .collect())
}

/// First 70% train, then the remaining tail split in half: valid, then test.
/// No shuffling.
pub fn split_corpus(docs: Vec<CleanedDoc>) -> Result<CorpusSplit, CorpusError> {
    let n = docs.len();
    if n < 10 {
        return Err(CorpusError::TooSmall(n));
    }
    let n_train = 7 * n / 10;
    let n_valid = (n - n_train) / 2;
    let mut docs = docs;
    let test = docs.split_off(n_train + n_valid);
    let valid = docs.split_off(n_train);
    Ok(CorpusSplit {
        train: docs,
        valid,
        test,
    })
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let set = parse_stopwords(&text);
    if set.is_empty() {
        return Err(CorpusError::EmptyStopwords(path.to_path_buf()));
    }
    Ok(set)
}
