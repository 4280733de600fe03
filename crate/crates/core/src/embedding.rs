//! Pre-trained word vectors in the whitespace-separated text format
//! (`word v1 v2 ... vD`, one entry per line).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::text::{EncodedText, PAD, UNK};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("MalformedLine: line {0} of the vector file is malformed")]
    MalformedLine(usize),
    #[error("UnknownWord: {0:?} is not in the embedding store")]
    UnknownWord(String),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl EmbeddingError {
    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingError::MalformedLine(_) => "MalformedLine",
            EmbeddingError::UnknownWord(_) => "UnknownWord",
            EmbeddingError::Io(_) => "IoError",
        }
    }
}

/// Dense embedding table. Row 0 is `<pad>` (zeros), row 1 is `<unk>` (the
/// mean of all loaded vectors), loaded words follow in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    word_to_row: HashMap<String, usize>,
    matrix: Vec<f32>,
}

impl EmbeddingStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    /// Parses the text format. Line numbers in errors are 1-based; an input
    /// without any vector reports line 0.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut dim = 0usize;
        let mut words = vec![PAD.to_string(), UNK.to_string()];
        let mut word_to_row = HashMap::new();
        let mut rows: Vec<f32> = Vec::new();
        let mut sum: Vec<f64> = Vec::new();
        let mut line = String::new();
        let mut reader = reader;
        let mut line_no = 0usize;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            line_no += 1;
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() {
                continue;
            }
            let mut parts = trimmed.split(' ');
            let word = parts.next().unwrap_or_default();
            let values: Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let values = values.map_err(|_| EmbeddingError::MalformedLine(line_no))?;
            if word.is_empty() || values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::MalformedLine(line_no));
            }
            if dim == 0 {
                dim = values.len();
                sum = vec![0.0; dim];
            } else if values.len() != dim {
                return Err(EmbeddingError::MalformedLine(line_no));
            }
            if word_to_row.contains_key(word) || word == PAD || word == UNK {
                continue;
            }
            word_to_row.insert(word.to_string(), words.len());
            words.push(word.to_string());
            for (s, &v) in sum.iter_mut().zip(&values) {
                *s += f64::from(v);
            }
            rows.extend_from_slice(&values);
        }
        if dim == 0 {
            return Err(EmbeddingError::MalformedLine(0));
        }
        let count = (words.len() - 2) as f64;
        let mut matrix = vec![0.0f32; dim];
        matrix.extend(sum.iter().map(|s| (s / count) as f32));
        matrix.extend(rows);
        word_to_row.insert(PAD.to_string(), 0);
        word_to_row.insert(UNK.to_string(), 1);
        Ok(EmbeddingStore { dim, words, word_to_row, matrix })
    }

    /// Builds a store from an explicit matrix whose rows follow `words`
    /// (which must start with `<pad>` and `<unk>`).
    pub fn from_parts(dim: usize, words: Vec<String>, matrix: Vec<f32>) -> Self {
        assert_eq!(words.len() * dim, matrix.len(), "matrix shape disagrees with word list");
        assert!(words.len() >= 2 && words[0] == PAD && words[1] == UNK);
        let word_to_row = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingStore { dim, words, word_to_row, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of loaded words, excluding the two sentinel rows.
    pub fn vocab_len(&self) -> usize {
        self.words.len() - 2
    }

    pub fn rows(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row_of(&self, word: &str) -> Option<usize> {
        self.word_to_row.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_to_row.contains_key(word)
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.matrix[row * self.dim..(row + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.row_of(word).map(|r| self.row(r))
    }

    /// Gathers one row per id, including padding positions.
    pub fn embed(&self, enc: &EncodedText) -> Vec<Vec<f32>> {
        enc.ids.iter().map(|&id| self.row(id as usize).to_vec()).collect()
    }

    /// Restricts the table to `keep` (in order, skipping words without a
    /// vector). The `<unk>` row keeps the mean over the full table.
    pub fn subset<'a, I: IntoIterator<Item = &'a str>>(&self, keep: I) -> EmbeddingStore {
        let mut words = vec![PAD.to_string(), UNK.to_string()];
        let mut matrix = self.matrix[..2 * self.dim].to_vec();
        let mut seen = std::collections::HashSet::new();
        for w in keep {
            if w == PAD || w == UNK || !seen.insert(w) {
                continue;
            }
            if let Some(r) = self.row_of(w) {
                words.push(w.to_string());
                matrix.extend_from_slice(self.row(r));
            }
        }
        EmbeddingStore::from_parts(self.dim, words, matrix)
    }

    /// The `k` loaded words most cosine-similar to `word`, excluding `word`
    /// itself, in descending similarity with lexicographic tie-break.
    pub fn nearest_words(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>, EmbeddingError> {
        let row = self
            .row_of(word)
            .filter(|&r| r >= 2)
            .ok_or_else(|| EmbeddingError::UnknownWord(word.to_string()))?;
        let query = self.row(row);
        let qn = norm(query);
        let mut scored: Vec<(String, f64)> = (2..self.rows())
            .filter(|&r| r != row)
            .map(|r| {
                let v = self.row(r);
                let denom = qn * norm(v);
                let sim = if denom > 0.0 { (dot(query, v) / denom).clamp(-1.0, 1.0) } else { 0.0 };
                (self.words[r].clone(), sim)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k.max(1));
        Ok(scored)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}
