use serde::{Deserialize, Serialize};

use super::KbError;

/// Unit-norm embedding vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalize `values`; vectors already of unit norm (within 1e-12) are kept
    /// bit-for-bit. Fails on an all-zero or non-finite vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self, KbError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(KbError::DegenerateVector);
        }
        if (norm - 1.0).abs() <= 1e-12 {
            return Ok(Embedding(values));
        }
        Ok(Embedding(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sentence encoder interface.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Embedding, KbError>;
}

pub const DEFAULT_DIM: usize = 256;

/// Feature-hashing bag of word unigrams and bigrams over [`tokenize`] output,
/// weighted `1 + ln(tf)` and L2-normalized.
#[derive(Clone, Debug)]
pub struct HashingEncoder {
    dim: usize,
}

impl Default for HashingEncoder {
    fn default() -> Self {
        HashingEncoder { dim: DEFAULT_DIM }
    }
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEncoder { dim }
    }
}

/// Function words, plus words present in nearly every scenario description,
/// dropped before hashing.
pub const STOPWORDS: &[&str] = &[
    "a",
    "adversarial",
    "adversary",
    "an",
    "and",
    "are",
    "as",
    "at",
    "be",
    "by",
    "ego",
    "for",
    "from",
    "in",
    "into",
    "is",
    "it",
    "its",
    "of",
    "on",
    "onto",
    "or",
    "that",
    "the",
    "then",
    "there",
    "this",
    "to",
    "vehicle",
    "with",
];

/// Strip one common inflectional suffix from words longer than four letters.
pub fn stem(word: &str) -> &str {
    if word.len() <= 4 || !word.is_ascii() {
        return word;
    }
    if let Some(base) = word.strip_suffix("ing").or_else(|| word.strip_suffix("ed")) {
        if base.len() >= 3 {
            return base;
        }
    }
    if let Some(base) = word.strip_suffix("es") {
        if ["s", "x", "ch", "sh"].iter().any(|e| base.ends_with(e)) {
            return base;
        }
    }
    match word.strip_suffix('s') {
        Some(base) if !base.ends_with('s') => base,
        _ => word,
    }
}

/// Lowercase, stemmed alphanumeric words with [`STOPWORDS`] removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| stem(&w).to_string())
        .collect()
}

/// 64-bit FNV-1a; stable across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Encoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, KbError> {
        if text.trim().is_empty() {
            return Err(KbError::EmptyText);
        }
        let words = tokenize(text);
        if words.is_empty() {
            return Err(KbError::EmptyText);
        }
        let mut counts = vec![0u32; self.dim];
        let mut bump = |feature: &str| {
            counts[(fnv1a(feature.as_bytes()) % self.dim as u64) as usize] += 1;
        };
        for w in &words {
            bump(w);
        }
        for pair in words.windows(2) {
            bump(&format!("{} {}", pair[0], pair[1]));
        }
        let weights = counts
            .into_iter()
            .map(|c| if c == 0 { 0.0 } else { 1.0 + f64::from(c).ln() })
            .collect();
        Embedding::normalized(weights)
    }
}

pub fn embed(text: &str, encoder: &dyn Encoder) -> Result<Embedding, KbError> {
    encoder.encode(text)
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_unit_norm() {
        let enc = HashingEncoder::default();
        let a = embed("a pedestrian crosses", &enc).unwrap();
        let b = embed("a pedestrian crosses", &enc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 256);
        assert!((a.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn empty_text_fails() {
        let enc = HashingEncoder::default();
        assert!(matches!(embed("", &enc), Err(KbError::EmptyText)));
        assert!(matches!(embed("  ?! ", &enc), Err(KbError::EmptyText)));
        assert!(matches!(embed("the", &enc), Err(KbError::EmptyText)));
    }

    #[test]
    fn cosine_cases() {
        let e = |v: Vec<f64>| Embedding::normalized(v).unwrap();
        let x = e(vec![1.0, 0.0, 0.0]);
        assert_eq!(cosine_similarity(&x, &x), 1.0);
        assert_eq!(cosine_similarity(&x, &e(vec![0.0, 1.0, 0.0])), 0.0);
        let a = e(vec![0.6, 0.8, 0.0]);
        assert!((cosine_similarity(&a, &x) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn stemming() {
        assert_eq!(stem("crossing"), "cross");
        assert_eq!(stem("crosses"), "cross");
        assert_eq!(stem("approaches"), "approach");
        assert_eq!(stem("brakes"), "brake");
        assert_eq!(stem("lanes"), "lane");
        assert_eq!(stem("pass"), "pass");
        assert_eq!(stem("class"), "class");
    }

    #[test]
    fn case_insensitive() {
        let enc = HashingEncoder::default();
        assert_eq!(
            enc.encode("Straight Road").unwrap(),
            enc.encode("straight road").unwrap()
        );
    }
}
