//! Text embeddings for name and label similarity.

use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("no embedding scripted for '{0}'")]
    Unknown(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

pub trait EmbeddingProvider: Send + Sync {
    /// Unit-length embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;

    /// Cosine similarity of two unit vectors.
    fn similarity(&self, a: &[f64], b: &[f64]) -> f64 {
        cosine(a, b)
    }
}

impl<E: EmbeddingProvider + ?Sized> EmbeddingProvider for &E {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        (**self).embed(text)
    }

    fn similarity(&self, a: &[f64], b: &[f64]) -> f64 {
        (**self).similarity(a, b)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Fixed vectors per text, normalized on insertion. Unknown texts fail.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEmbedder {
    vectors: HashMap<String, Vec<f64>>,
}

impl ScriptedEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, text: &str, vector: Vec<f64>) -> Self {
        self.insert(text, vector);
        self
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) {
        self.vectors.insert(text.to_string(), normalize(vector));
    }

    /// Unit vectors on axes `i` and `j` (in `dim` dimensions) tilted so that
    /// their cosine is exactly `sim`: the first is `e_i`, the second
    /// `sim·e_i + sqrt(1-sim²)·e_j`.
    pub fn pair(dim: usize, i: usize, j: usize, sim: f64) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; dim];
        a[i] = 1.0;
        let mut b = vec![0.0; dim];
        b[i] = sim;
        b[j] = (1.0 - sim * sim).max(0.0).sqrt();
        (a, b)
    }
}

impl EmbeddingProvider for ScriptedEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::Unknown(text.to_string()))
    }
}

/// Offline default: hashed character trigrams of the lowercased text with
/// word-boundary padding, split camelCase and underscores first.
#[derive(Debug, Clone, Copy)]
pub struct NgramEmbedder {
    pub dim: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        NgramEmbedder { dim: 512 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in text.chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase() || c.is_numeric();
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl EmbeddingProvider for NgramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let dim = self.dim.max(1) as u64;
        let mut v = vec![0.0; dim as usize];
        for word in words(text) {
            let padded: Vec<char> = format!("^{word}$").chars().collect();
            for gram in padded.windows(3) {
                let s: String = gram.iter().collect();
                let h = fnv1a(s.as_bytes());
                v[(h % dim) as usize] += 1.0;
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            // no alphanumerics: fall back to the raw bytes
            let h = fnv1a(text.as_bytes());
            v[(h % dim) as usize] = 1.0;
        }
        Ok(normalize(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_self_similarity_and_symmetry() {
        let e = NgramEmbedder::default();
        let a = e.embed("birthPlace").unwrap();
        let b = e.embed("placeOfBirth").unwrap();
        let c = e.embed("spouse").unwrap();
        assert!((e.similarity(&a, &a) - 1.0).abs() < 1e-6);
        assert_eq!(e.similarity(&a, &b), e.similarity(&b, &a));
        assert!(e.similarity(&a, &b) > e.similarity(&a, &c));
        assert!((e.similarity(&a, &e.embed("birth_place").unwrap()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scripted_pairs_hit_the_requested_cosine() {
        let (a, b) = ScriptedEmbedder::pair(3, 0, 1, 0.97);
        let e = ScriptedEmbedder::new().with("a", a).with("b", b);
        let s = e.similarity(&e.embed("a").unwrap(), &e.embed("b").unwrap());
        assert!((s - 0.97).abs() < 1e-12);
        assert!(matches!(e.embed("zzz"), Err(EmbedError::Unknown(_))));
    }

    #[test]
    fn word_splitting() {
        assert_eq!(words("instanceOf"), ["instance", "of"]);
        assert_eq!(words("birth_date"), ["birth", "date"]);
        assert_eq!(words("John F. Kennedy"), ["john", "f", "kennedy"]);
    }
}
