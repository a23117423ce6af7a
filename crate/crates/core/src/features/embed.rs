use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::text::is_word;

/// Word vectors of one fixed dimension, keyed by lowercase word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub name: String,
    pub dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(name: impl Into<String>, dimension: usize) -> Self {
        Self {
            name: name.into(),
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Adds a vector; the first entry for a (lowercased) word wins.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::shape(
                format!("vector for {word:?} in table {}", self.name),
                self.dimension,
                vector.len(),
            ));
        }
        self.entries.entry(word.to_lowercase()).or_insert(vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whitespace-separated text: a word followed by its components, one
    /// entry per line. The dimension comes from the first entry. A leading
    /// `count dimension` header line, as written by word2vec, is skipped.
    pub fn parse(name: impl Into<String>, text: &str, origin: &str) -> Result<Self> {
        let name = name.into();
        let mut table: Option<EmbeddingTable> = None;
        for (ln, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if ln == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
                continue;
            }
            let location = format!("{origin}:{}", ln + 1);
            let vector = values
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Malformed {
                            location: location.clone(),
                            message: format!("bad component {v:?}"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.is_empty() {
                return Err(Error::Malformed {
                    location,
                    message: "entry has no components".into(),
                });
            }
            let t = table.get_or_insert_with(|| EmbeddingTable::new(name.clone(), vector.len()));
            if vector.len() != t.dimension {
                return Err(Error::Malformed {
                    location,
                    message: format!("expected {} components, found {}", t.dimension, vector.len()),
                });
            }
            t.insert(word, vector)?;
        }
        table.ok_or_else(|| Error::Malformed {
            location: origin.to_string(),
            message: "embedding file has no entries".into(),
        })
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(name, &text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedText {
    pub vector: Vec<f64>,
    /// Word tokens (those with an alphanumeric character) missing from the table.
    pub oov: usize,
}

/// Mean vector of the in-vocabulary tokens; the zero vector when none are.
pub fn avg_embedding(tokens: &[String], table: &EmbeddingTable) -> AveragedText {
    let mut sum = vec![0.0; table.dimension];
    let mut hits = 0usize;
    let mut oov = 0usize;
    for t in tokens {
        match table.get(t) {
            Some(v) => {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                hits += 1;
            }
            None if is_word(t) => oov += 1,
            None => {}
        }
    }
    if hits > 0 {
        for s in &mut sum {
            *s /= hits as f64;
        }
    }
    AveragedText { vector: sum, oov }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine operands", u.len(), v.len()));
    }
    Ok(crate::math::cosine(u, v))
}
