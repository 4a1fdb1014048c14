//! Extractive question answering: paragraph passages ranked with BM25.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use super::{token_spans, tokenize};

/// Upper bound on tokens per passage.
pub const MAX_PASSAGE_TOKENS: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    /// Path of the source file relative to the corpus root, `/`-separated.
    pub doc_id: String,
    pub ordinal: u32,
    pub text: String,
    pub token_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{op} {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: statistics do not match the stored passages", path.display())]
    Inconsistent { path: PathBuf },
}

/// Term statistics over a fixed set of passages. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub params: Bm25Params,
    passages: Vec<Passage>,
    /// n_t: number of passages containing each term.
    doc_freq: BTreeMap<String, u32>,
    /// f(t, p) per passage, parallel to `passages`.
    term_freq: Vec<BTreeMap<String, u32>>,
    avgdl: f64,
    #[serde(default)]
    skipped: Vec<SkippedFile>,
}

fn block_pieces(block: &str) -> Vec<(String, usize)> {
    let total = tokenize(block).len();
    if total <= MAX_PASSAGE_TOKENS {
        return vec![(block.to_string(), total)];
    }
    // Cut oversized paragraphs between words; a single word with too many
    // tokens is cut between its tokens.
    let mut pieces = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut count = 0;
    for word in block.split_whitespace() {
        let spans = token_spans(word);
        if count + spans.len() > MAX_PASSAGE_TOKENS && !current.is_empty() {
            pieces.push((current.join(" "), count));
            current.clear();
            count = 0;
        }
        if spans.len() > MAX_PASSAGE_TOKENS {
            let mut from = 0;
            for chunk in spans.chunks(MAX_PASSAGE_TOKENS) {
                let to = chunk.last().map_or(word.len(), |s| s.1);
                let to = if to == spans[spans.len() - 1].1 { word.len() } else { to };
                pieces.push((word[from..to].to_string(), chunk.len()));
                from = to;
            }
            continue;
        }
        current.push(word);
        count += spans.len();
    }
    if !current.is_empty() {
        pieces.push((current.join(" "), count));
    }
    pieces
}

/// Splits a document on blank lines and greedily merges consecutive
/// paragraphs into passages of at most [`MAX_PASSAGE_TOKENS`] tokens.
pub fn split_passages(doc_id: &str, text: &str) -> Vec<Passage> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current.join("\n"));
    }

    let mut passages = Vec::new();
    let mut parts: Vec<String> = Vec::new();
    let mut count = 0;
    let mut flush = |parts: &mut Vec<String>, count: &mut usize| {
        if !parts.is_empty() {
            passages.push(Passage {
                doc_id: doc_id.to_string(),
                ordinal: passages.len() as u32,
                text: parts.join("\n\n"),
                token_count: *count as u32,
            });
            parts.clear();
            *count = 0;
        }
    };
    for block in &blocks {
        for (piece, n) in block_pieces(block) {
            if count + n > MAX_PASSAGE_TOKENS {
                flush(&mut parts, &mut count);
            }
            parts.push(piece);
            count += n;
        }
    }
    flush(&mut parts, &mut count);
    passages
}

/// IDF(t) = ln(1 + (N − n_t + 0.5) / (n_t + 0.5)).
pub fn bm25_idf(n: usize, n_t: u32) -> f64 {
    let n_t = f64::from(n_t);
    (1.0 + (n as f64 - n_t + 0.5) / (n_t + 0.5)).ln()
}

fn io(op: &'static str, path: &Path) -> impl FnOnce(std::io::Error) -> IndexError {
    let path = path.to_path_buf();
    move |source| IndexError::Io { op, path, source }
}

impl RetrievalIndex {
    /// Computes statistics for the given passages.
    pub fn from_passages(passages: Vec<Passage>, params: Bm25Params) -> Self {
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        let mut term_freq = Vec::with_capacity(passages.len());
        let mut total = 0u64;
        for p in &passages {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokenize(&p.text) {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            total += u64::from(p.token_count);
            term_freq.push(tf);
        }
        let avgdl = if passages.is_empty() {
            0.0
        } else {
            total as f64 / passages.len() as f64
        };
        Self {
            params,
            passages,
            doc_freq,
            term_freq,
            avgdl,
            skipped: Vec::new(),
        }
    }

    /// Indexes in-memory documents given as `(doc_id, text)`.
    pub fn from_documents<I, S, T>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let passages = docs
            .into_iter()
            .flat_map(|(id, text)| split_passages(id.as_ref(), text.as_ref()))
            .collect();
        Self::from_passages(passages, params)
    }

    /// Indexes every `.txt` and `.md` file under `dir`, in path order.
    /// Unreadable or non-UTF-8 files are skipped and listed in
    /// [`RetrievalIndex::skipped`].
    pub fn build(dir: &Path) -> Result<Self, IndexError> {
        fs::read_dir(dir).map_err(io("read corpus directory", dir))?;
        let mut docs = Vec::new();
        let mut skipped = Vec::new();
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                    log::warn!("skipping {path}: {e}");
                    skipped.push(SkippedFile {
                        path,
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let is_text = entry.file_type().is_file()
                && entry
                    .path()
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("txt") || e.eq_ignore_ascii_case("md"));
            if !is_text {
                continue;
            }
            let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
            let doc_id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            let text = fs::read(entry.path())
                .map_err(|e| e.to_string())
                .and_then(|bytes| String::from_utf8(bytes).map_err(|e| e.to_string()));
            match text {
                Ok(text) => docs.push((doc_id, text)),
                Err(error) => {
                    log::warn!("skipping {doc_id}: {error}");
                    skipped.push(SkippedFile { path: doc_id, error });
                }
            }
        }
        let mut index = Self::from_documents(docs, Bm25Params::default());
        index.skipped = skipped;
        Ok(index)
    }

    pub fn with_params(mut self, params: Bm25Params) -> Self {
        self.params = params;
        self
    }

    /// N, the number of passages.
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn term_freq(&self, passage: usize, term: &str) -> u32 {
        self.term_freq
            .get(passage)
            .and_then(|tf| tf.get(term))
            .copied()
            .unwrap_or(0)
    }

    pub fn skipped(&self) -> &[SkippedFile] {
        &self.skipped
    }

    /// BM25 score of passage `i` for already-deduplicated query terms.
    fn score(&self, i: usize, terms: &BTreeSet<String>) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let len = f64::from(self.passages[i].token_count);
        let norm = k1 * (1.0 - b + b * len / self.avgdl);
        terms
            .iter()
            .map(|t| {
                let f = f64::from(self.term_freq(i, t));
                if f == 0.0 {
                    return 0.0;
                }
                bm25_idf(self.len(), self.doc_freq(t)) * f * (k1 + 1.0) / (f + norm)
            })
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io("create directory", parent))?;
        }
        let json = serde_json::to_vec(self).map_err(|source| IndexError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, json).map_err(io("write index", &tmp))?;
        fs::rename(&tmp, path).map_err(io("replace index", path))
    }

    /// Loads a saved index, checking its statistics against its passages.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(io("read index", path))?;
        let stored: Self = serde_json::from_slice(&bytes).map_err(|source| IndexError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rebuilt = Self::from_passages(stored.passages.clone(), stored.params);
        rebuilt.skipped = stored.skipped.clone();
        let counts_match = stored
            .passages
            .iter()
            .all(|p| p.token_count as usize == tokenize(&p.text).len());
        if rebuilt != stored || !counts_match {
            return Err(IndexError::Inconsistent {
                path: path.to_path_buf(),
            });
        }
        Ok(stored)
    }
}

/// Top `k` passages with a positive BM25 score, best first; ties are
/// broken by `(doc_id, ordinal)`.
pub fn answer(question: &str, index: &RetrievalIndex, k: usize) -> Vec<ScoredPassage> {
    if k == 0 || index.is_empty() {
        return Vec::new();
    }
    let terms: BTreeSet<String> = tokenize(question).into_iter().collect();
    let mut scored: Vec<(f64, usize)> = (0..index.len())
        .map(|i| (index.score(i, &terms), i))
        .filter(|(s, _)| *s > 0.0)
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        let (pa, pb) = (&index.passages[*a], &index.passages[*b]);
        sb.total_cmp(sa)
            .then_with(|| pa.doc_id.cmp(&pb.doc_id))
            .then_with(|| pa.ordinal.cmp(&pb.ordinal))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(score, i)| ScoredPassage {
            passage: index.passages[i].clone(),
            score,
        })
        .collect()
}

/// Hook for turning retrieved passages into prose, e.g. with a language
/// model. Returning `None` means "show the passages as they are".
pub trait AnswerSynthesizer {
    fn synthesize(&self, question: &str, passages: &[ScoredPassage]) -> Option<String>;
}

/// Answers with the best passage verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct Extractive;

impl AnswerSynthesizer for Extractive {
    fn synthesize(&self, _question: &str, passages: &[ScoredPassage]) -> Option<String> {
        passages.first().map(|p| p.passage.text.clone())
    }
}
