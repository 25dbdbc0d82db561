//! ROUGE-N and summary-level ROUGE-L.
//!
//! Texts are lowercased and split on non-alphanumeric characters, with no
//! stop-word removal and no stemming. ROUGE-L runs on the flattened token
//! sequence of the whole summary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{word_tokens, TokenSplit};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(hits: usize, candidate: usize, reference: usize) -> Self {
        if candidate == 0 || reference == 0 {
            return RougeScore::default();
        }
        let precision = hits as f64 / candidate as f64;
        let recall = hits as f64 / reference as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

pub fn rouge_tokens(text: &str) -> Vec<String> {
    word_tokens(text, true, TokenSplit::Alphanumeric)
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(|t| t.as_ref()).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap. `n = 0` yields the zero score.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let hits = cand
        .iter()
        .map(|(k, &c)| c.min(refs.get(k).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(hits, ngram_total(candidate.len(), n), ngram_total(reference.len(), n))
}

fn ngram_total(len: usize, n: usize) -> usize {
    if n == 0 || len < n {
        0
    } else {
        len - n + 1
    }
}

pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

pub fn score_texts(candidate: &str, reference: &str) -> RougeTriple {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    RougeTriple {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
    }
}
