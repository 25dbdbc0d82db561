//! Documents, active vocabularies and term-frequency distributions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Lookup from token string to its row in an embedding store.
pub trait TokenIndex {
    fn index_of(&self, token: &str) -> Option<usize>;
    fn is_empty(&self) -> bool;
}

impl TokenIndex for HashMap<String, usize> {
    fn index_of(&self, token: &str) -> Option<usize> {
        self.get(token).copied()
    }

    fn is_empty(&self) -> bool {
        HashMap::is_empty(self)
    }
}

/// The distinct tokens of one document, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveVocabulary {
    tokens: Vec<String>,
    global_ids: Vec<usize>,
    lookup: HashMap<String, usize>,
}

impl ActiveVocabulary {
    /// Deduplicates `tokens` keeping first occurrences. Every token must be
    /// known to `index`.
    pub fn from_tokens<I, X>(tokens: I, index: &X) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
        X: TokenIndex + ?Sized,
    {
        let mut vocab = ActiveVocabulary {
            tokens: Vec::new(),
            global_ids: Vec::new(),
            lookup: HashMap::new(),
        };
        for token in tokens {
            if vocab.lookup.contains_key(&token) {
                continue;
            }
            let global = index
                .index_of(&token)
                .ok_or_else(|| Error::MissingToken(token.clone()))?;
            vocab.insert(token, global);
        }
        Ok(vocab)
    }

    fn insert(&mut self, token: String, global: usize) -> usize {
        let id = self.tokens.len();
        self.lookup.insert(token.clone(), id);
        self.tokens.push(token);
        self.global_ids.push(global);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn global_id(&self, id: usize) -> usize {
        self.global_ids[id]
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }
}

/// Ordered sentences of token ids into an [`ActiveVocabulary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    sentences: Vec<Vec<usize>>,
    source_text: Option<Vec<String>>,
}

impl Document {
    pub fn new(sentences: Vec<Vec<usize>>, vocab_size: usize) -> Result<Self> {
        if sentences.is_empty() || sentences.iter().all(Vec::is_empty) {
            return Err(Error::EmptyDocument);
        }
        if let Some(&bad) = sentences.iter().flatten().find(|&&t| t >= vocab_size) {
            return Err(Error::Config(format!(
                "token id {bad} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Document {
            sentences,
            source_text: None,
        })
    }

    pub fn with_source_text(mut self, text: Vec<String>) -> Self {
        debug_assert_eq!(text.len(), self.sentences.len());
        self.source_text = Some(text);
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn source_text(&self) -> Option<&[String]> {
        self.source_text.as_deref()
    }

    /// Per-sentence term-frequency distributions over `vocab_size` tokens.
    pub fn distributions(&self, vocab_size: usize) -> Vec<Distribution> {
        self.sentences
            .iter()
            .map(|s| sentence_distribution(s, vocab_size))
            .collect()
    }
}

/// Sparse nonnegative weights over the active vocabulary. Sums to one, or is
/// empty (the zero vector of an all-filtered sentence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    dim: usize,
    weights: BTreeMap<usize, f64>,
}

impl Distribution {
    pub fn zero(dim: usize) -> Self {
        Distribution {
            dim,
            weights: BTreeMap::new(),
        }
    }

    /// Drops zero entries from a dense vector. No normalization is applied.
    pub fn from_dense(dense: &[f64]) -> Self {
        Distribution {
            dim: dense.len(),
            weights: dense
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| (i, w))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, id: usize) -> f64 {
        self.weights.get(&id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&k, &v) in &self.weights {
            out[k] = v;
        }
        out
    }
}

/// 0/1 marks over the sentences of a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractionVector {
    marks: Vec<bool>,
}

impl ExtractionVector {
    pub fn zeros(n: usize) -> Self {
        ExtractionVector {
            marks: vec![false; n],
        }
    }

    pub fn ones(n: usize) -> Self {
        ExtractionVector {
            marks: vec![true; n],
        }
    }

    pub fn from_marks(marks: Vec<bool>) -> Self {
        ExtractionVector { marks }
    }

    pub fn from_indices(n: usize, selected: &[usize]) -> Self {
        let mut marks = vec![false; n];
        for &i in selected {
            marks[i] = true;
        }
        ExtractionVector { marks }
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn count(&self) -> usize {
        self.marks.iter().filter(|&&m| m).count()
    }

    pub fn is_marked(&self, i: usize) -> bool {
        self.marks[i]
    }

    pub fn marks(&self) -> &[bool] {
        &self.marks
    }

    pub fn indices(&self) -> Vec<usize> {
        self.marks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenSplit {
    /// Split on runs of non-alphanumeric characters.
    #[default]
    Alphanumeric,
    /// Split on whitespace only; for input that is already tokenized.
    Whitespace,
}

#[derive(Debug, Clone)]
pub struct TokenizeOptions {
    pub lowercase: bool,
    pub stopwords: Option<HashSet<String>>,
    /// Drop tokens missing from the embedding vocabulary instead of failing.
    pub drop_oov: bool,
    pub split: TokenSplit,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        TokenizeOptions {
            lowercase: true,
            stopwords: Some(english_stopwords()),
            drop_oov: true,
            split: TokenSplit::Alphanumeric,
        }
    }
}

pub fn english_stopwords() -> HashSet<String> {
    parse_stopwords(ENGLISH_STOPWORDS)
}

/// Reads a stop-word file with one token per line.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    Ok(parse_stopwords(&fs::read_to_string(path)?))
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawDocument {
    Text { text: String },
    Sentences { sentences: Vec<String> },
}

impl RawDocument {
    pub fn text(s: impl Into<String>) -> Self {
        RawDocument::Text { text: s.into() }
    }

    pub fn sentences<S: Into<String>>(s: impl IntoIterator<Item = S>) -> Self {
        RawDocument::Sentences {
            sentences: s.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tokenized {
    pub document: Document,
    pub vocab: ActiveVocabulary,
    /// Token occurrences dropped because they had no embedding.
    pub oov_dropped: usize,
}

/// Rule-based splitter: a sentence ends at `.`, `!` or `?` followed by
/// whitespace or end of input.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                let piece = text[start..end].trim();
                if !piece.is_empty() {
                    out.push(piece.to_string());
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Lowercases (optionally) and splits one sentence into raw tokens.
pub fn word_tokens(sentence: &str, lowercase: bool, split: TokenSplit) -> Vec<String> {
    let text = if lowercase {
        sentence.to_lowercase()
    } else {
        sentence.to_string()
    };
    match split {
        TokenSplit::Alphanumeric => text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
        TokenSplit::Whitespace => text.split_whitespace().map(str::to_string).collect(),
    }
}

pub fn tokenize<X>(raw: &RawDocument, index: &X, options: &TokenizeOptions) -> Result<Tokenized>
where
    X: TokenIndex + ?Sized,
{
    if index.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let sentences_text: Vec<String> = match raw {
        RawDocument::Text { text } => split_sentences(text),
        RawDocument::Sentences { sentences } => sentences
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    if sentences_text.is_empty() {
        return Err(Error::EmptyDocument);
    }

    let mut vocab = ActiveVocabulary {
        tokens: Vec::new(),
        global_ids: Vec::new(),
        lookup: HashMap::new(),
    };
    let mut oov_dropped = 0;
    let mut sentences = Vec::with_capacity(sentences_text.len());
    for sentence in &sentences_text {
        let mut ids = Vec::new();
        for token in word_tokens(sentence, options.lowercase, options.split) {
            if options
                .stopwords
                .as_ref()
                .is_some_and(|sw| sw.contains(&token))
            {
                continue;
            }
            if let Some(id) = vocab.id_of(&token) {
                ids.push(id);
                continue;
            }
            match index.index_of(&token) {
                Some(global) => ids.push(vocab.insert(token, global)),
                None if options.drop_oov => oov_dropped += 1,
                None => return Err(Error::MissingToken(token)),
            }
        }
        sentences.push(ids);
    }

    let document = Document::new(sentences, vocab.len())?.with_source_text(sentences_text);
    Ok(Tokenized {
        document,
        vocab,
        oov_dropped,
    })
}

/// Normalized bag of tokens; the empty sentence maps to the zero vector.
pub fn sentence_distribution(sentence: &[usize], vocab_size: usize) -> Distribution {
    let mut weights = BTreeMap::new();
    for &t in sentence {
        *weights.entry(t).or_insert(0.0) += 1.0;
    }
    let len = sentence.len() as f64;
    for w in weights.values_mut() {
        *w /= len;
    }
    Distribution {
        dim: vocab_size,
        weights,
    }
}

/// Uniform mean of all sentence distributions.
pub fn document_distribution(sentence_dists: &[Distribution]) -> Result<Distribution> {
    if sentence_dists.iter().all(Distribution::is_zero) {
        return Err(Error::AllSentencesEmpty);
    }
    Ok(mean_of(sentence_dists.iter()))
}

/// Mean of the selected sentence distributions.
pub fn summary_distribution(
    sentence_dists: &[Distribution],
    selection: &ExtractionVector,
) -> Result<Distribution> {
    if selection.len() != sentence_dists.len() {
        return Err(Error::Config(format!(
            "extraction vector has {} entries for {} sentences",
            selection.len(),
            sentence_dists.len()
        )));
    }
    if selection.count() == 0 {
        return Err(Error::EmptySelection);
    }
    let chosen: Vec<&Distribution> = sentence_dists
        .iter()
        .zip(selection.marks())
        .filter(|(_, &m)| m)
        .map(|(d, _)| d)
        .collect();
    if chosen.iter().all(|d| d.is_zero()) {
        return Err(Error::EmptySelection);
    }
    Ok(mean_of(chosen.into_iter()))
}

/// Averages over every member, then renormalizes when zero-vector members
/// pulled the mass below one. Callers guarantee a non-zero member.
fn mean_of<'a>(dists: impl Iterator<Item = &'a Distribution>) -> Distribution {
    let mut dim = 0;
    let mut count = 0usize;
    let mut any_zero = false;
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for d in dists {
        dim = d.dim;
        count += 1;
        any_zero |= d.is_zero();
        for (&k, &v) in &d.weights {
            *acc.entry(k).or_insert(0.0) += v;
        }
    }
    let n = count as f64;
    for v in acc.values_mut() {
        *v /= n;
    }
    if any_zero {
        let total: f64 = acc.values().sum();
        for v in acc.values_mut() {
            *v /= total;
        }
    }
    Distribution { dim, weights: acc }
}
