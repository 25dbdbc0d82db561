//! Token embeddings and the pairwise transport cost between tokens.
//!
//! Embeddings are read from the plain-text word2vec layout: a header line
//! `N dim`, then `N` lines of `token f1 ... fdim`. Only the `p x p` cost
//! matrix over a document's active vocabulary is ever materialized.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{ActiveVocabulary, TokenIndex};

/// Immutable token -> vector table.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` rows. Rows must share one
    /// non-zero dimension and tokens must be unique.
    pub fn from_rows<S, I>(rows: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<f64>)>,
    {
        let mut table = EmbeddingTable {
            dim: 0,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (line, (token, vector)) in rows.into_iter().enumerate() {
            if table.tokens.is_empty() {
                if vector.is_empty() {
                    return Err(Error::DimensionMismatch {
                        line: line + 1,
                        expected: 1,
                        found: 0,
                    });
                }
                table.dim = vector.len();
            }
            table.push(line + 1, token.into(), &vector)?;
        }
        Ok(table)
    }

    fn push(&mut self, line: usize, token: String, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                line,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(&token) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate token `{token}`"),
            });
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&id| self.vector(id))
    }

    /// Copy of the table with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }
}

impl TokenIndex for EmbeddingTable {
    fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Loads a word2vec text file.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let file = File::open(path)?;
    read_word2vec_text(BufReader::new(file))
}

/// Parses the word2vec text layout from any buffered reader.
pub fn read_word2vec_text<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut lines = reader.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing `N dim` header".into(),
                })
            }
        }
    };
    let mut fields = header.split_whitespace();
    let vocab_size: usize = parse_field(fields.next(), 1, "vocabulary size")?;
    let dim: usize = parse_field(fields.next(), 1, "dimension")?;
    if fields.next().is_some() {
        return Err(Error::Parse {
            line: 1,
            message: "header must contain exactly two fields".into(),
        });
    }
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "dimension must be at least 1".into(),
        });
    }

    let mut table = EmbeddingTable {
        dim,
        tokens: Vec::with_capacity(vocab_size),
        index: HashMap::with_capacity(vocab_size),
        data: Vec::with_capacity(vocab_size * dim),
    };
    let mut row = Vec::with_capacity(dim);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if table.len() == vocab_size {
            return Err(Error::Parse {
                line: line_no,
                message: format!("header declares {vocab_size} rows but more follow"),
            });
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default().to_string();
        row.clear();
        for part in parts {
            row.push(parse_field::<f64>(Some(part), line_no, "vector component")?);
        }
        table.push(line_no, token, &row)?;
    }
    if table.len() != vocab_size {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header declares {vocab_size} rows but the file has {}",
                table.len()
            ),
        });
    }
    Ok(table)
}

fn parse_field<T: FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    let field = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} `{field}`"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "euc" => Ok(Metric::Euclidean),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Dense symmetric `p x p` matrix of unit transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    dim: usize,
    entries: Vec<f64>,
    metric: Metric,
}

impl CostMatrix {
    /// Wraps a row-major square matrix. Used for hand-built instances; the
    /// pipeline goes through [`cost_matrix`].
    pub fn from_entries(dim: usize, entries: Vec<f64>, metric: Metric) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Config(format!(
                "cost matrix needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("cost entries must be finite and nonnegative".into()));
        }
        Ok(CostMatrix {
            dim,
            entries,
            metric,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn mean(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CostMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|c| c * factor).collect(),
            metric: self.metric,
        }
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.entries[i * n + j];
            }
        }
        CostMatrix {
            dim: n,
            entries,
            metric: self.metric,
        }
    }
}

/// Pairwise costs between the active vocabulary's tokens.
pub fn cost_matrix(
    vocab: &ActiveVocabulary,
    table: &EmbeddingTable,
    metric: Metric,
) -> Result<CostMatrix> {
    let vectors = vocab
        .tokens()
        .iter()
        .map(|t| table.get(t).ok_or_else(|| Error::MissingToken(t.clone())))
        .collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    if metric == Metric::Cosine {
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNormVector(vocab.tokens()[i].clone()));
        }
    }

    let p = vectors.len();
    let mut entries = vec![0.0; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let c = match metric {
                Metric::Euclidean => vectors[i]
                    .iter()
                    .zip(vectors[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                Metric::Cosine => {
                    let cos = dot(vectors[i], vectors[j]) / (norms[i] * norms[j]);
                    (1.0 - cos).clamp(0.0, 2.0)
                }
            };
            entries[i * p + j] = c;
            entries[j * p + i] = c;
        }
    }
    Ok(CostMatrix {
        dim: p,
        entries,
        metric,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
