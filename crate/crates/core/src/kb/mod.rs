//! Description-to-snippet knowledge base with exact cosine retrieval.
//!
//! Each component kind has its own flat index. An entry is scored by the best
//! match over its description and all of its rephrasings.

mod encoder;
mod store;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_snippet, ComponentKind, DslError, SnippetAst};

pub use encoder::{
    cosine_similarity, embed, stem, tokenize, Embedding, Encoder, HashingEncoder, DEFAULT_DIM, STOPWORDS,
};
pub use store::{seed_kb_with_holdout, EmbeddingRow, EntryRecord, KB_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("vector has zero or non-finite norm")]
    DegenerateVector,
    #[error("encoder failure: {0}")]
    EncoderFailure(String),
    #[error("snippet does not parse: {0}")]
    Parse(#[from] DslError),
    #[error("duplicate {kind} description: {description:?}")]
    DuplicateDescription { kind: ComponentKind, description: String },
    #[error("rephrasings must be distinct and differ from the description")]
    DuplicateRephrasing,
    #[error("no {0} entries to index")]
    EmptyComponent(ComponentKind),
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown entry {0}")]
    UnknownEntry(EntryId),
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub u32);

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct SnippetEntry {
    pub id: EntryId,
    pub kind: ComponentKind,
    pub description: String,
    pub rephrasings: Vec<String>,
    pub snippet_text: String,
    pub snippet: SnippetAst,
    /// One per variant: the description first, then each rephrasing.
    pub embeddings: Vec<Embedding>,
}

impl SnippetEntry {
    pub fn variants(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.description.as_str()).chain(self.rephrasings.iter().map(String::as_str))
    }
}

/// Mutable store; freeze it into per-component indices before querying.
#[derive(Clone)]
pub struct KnowledgeBase {
    encoder: Arc<dyn Encoder>,
    entries: Vec<SnippetEntry>,
}

impl fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("dim", &self.encoder.dim())
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase::new(Arc::new(HashingEncoder::default()))
    }
}

impl KnowledgeBase {
    pub fn new(encoder: Arc<dyn Encoder>) -> Self {
        KnowledgeBase {
            encoder,
            entries: Vec::new(),
        }
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn entries(&self) -> &[SnippetEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> Option<&SnippetEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn add_entry(
        &mut self,
        kind: ComponentKind,
        description: &str,
        snippet_text: &str,
        rephrasings: &[String],
    ) -> Result<EntryId, KbError> {
        let snippet = parse_snippet(snippet_text, kind)?;
        if self
            .entries
            .iter()
            .any(|e| e.kind == kind && e.description == description)
        {
            return Err(KbError::DuplicateDescription {
                kind,
                description: description.to_string(),
            });
        }
        for (i, r) in rephrasings.iter().enumerate() {
            if r == description || rephrasings[..i].contains(r) {
                return Err(KbError::DuplicateRephrasing);
            }
        }
        let id = EntryId(self.entries.iter().map(|e| e.id.0 + 1).max().unwrap_or(0));
        let embeddings = std::iter::once(description)
            .chain(rephrasings.iter().map(String::as_str))
            .map(|t| self.encoder.encode(t))
            .collect::<Result<Vec<_>, _>>()?;
        self.entries.push(SnippetEntry {
            id,
            kind,
            description: description.to_string(),
            rephrasings: rephrasings.to_vec(),
            snippet_text: snippet_text.to_string(),
            snippet,
            embeddings,
        });
        Ok(id)
    }

    /// Replace one variant's embedding, e.g. with a vector from an external encoder.
    pub fn set_embedding(&mut self, id: EntryId, variant: usize, embedding: Embedding) -> Result<(), KbError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or(KbError::UnknownEntry(id))?;
        let slot = entry.embeddings.get_mut(variant).ok_or(KbError::UnknownEntry(id))?;
        *slot = embedding;
        Ok(())
    }

    pub fn build_index(&self, kind: ComponentKind) -> Result<Index, KbError> {
        let mut rows = Vec::new();
        let mut dim = None;
        for e in self.entries.iter().filter(|e| e.kind == kind) {
            for (variant, emb) in e.embeddings.iter().enumerate() {
                let expected = *dim.get_or_insert(emb.dim());
                if emb.dim() != expected {
                    return Err(KbError::DimensionMismatch {
                        expected,
                        got: emb.dim(),
                    });
                }
                rows.push(IndexRow {
                    entry: e.id,
                    variant,
                    embedding: emb.clone(),
                });
            }
        }
        match dim {
            Some(dim) => Ok(Index { kind, dim, rows }),
            None => Err(KbError::EmptyComponent(kind)),
        }
    }

    /// Freeze all three component indices.
    pub fn freeze(&self) -> Result<FrozenKb, KbError> {
        Ok(FrozenKb {
            kb: self.clone(),
            indices: [
                self.build_index(ComponentKind::Behavior)?,
                self.build_index(ComponentKind::Geometry)?,
                self.build_index(ComponentKind::SpawnPosition)?,
            ],
        })
    }
}

#[derive(Clone, Debug)]
pub struct IndexRow {
    pub entry: EntryId,
    pub variant: usize,
    pub embedding: Embedding,
}

/// Frozen flat index over every variant embedding of one component kind.
#[derive(Clone, Debug)]
pub struct Index {
    kind: ComponentKind,
    dim: usize,
    rows: Vec<IndexRow>,
}

/// One retrieval hit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub entry: EntryId,
    pub score: f64,
}

impl Index {
    pub fn kind(&self) -> ComponentKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[IndexRow] {
        &self.rows
    }

    /// Top-`k` entries by best-variant cosine score, descending; ties keep insertion order.
    pub fn retrieve(&self, query: &Embedding, k: usize) -> Result<Vec<Hit>, KbError> {
        if query.dim() != self.dim {
            return Err(KbError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut best: Vec<Hit> = Vec::new();
        for row in &self.rows {
            let score = cosine_similarity(query, &row.embedding);
            match best.iter_mut().find(|h| h.entry == row.entry) {
                Some(h) => h.score = h.score.max(score),
                None => best.push(Hit {
                    entry: row.entry,
                    score,
                }),
            }
        }
        // stable sort keeps insertion order among equal scores
        best.sort_by(|a, b| b.score.total_cmp(&a.score));
        best.truncate(k.max(1));
        Ok(best)
    }
}

/// Knowledge base snapshot plus its three frozen indices.
#[derive(Clone, Debug)]
pub struct FrozenKb {
    kb: KnowledgeBase,
    indices: [Index; 3],
}

impl FrozenKb {
    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, kind: ComponentKind) -> &Index {
        &self.indices[kind.index()]
    }

    pub fn entry(&self, id: EntryId) -> Option<&SnippetEntry> {
        self.kb.entry(id)
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        self.kb.encoder()
    }

    pub fn query(&self, kind: ComponentKind, text: &str, k: usize) -> Result<Vec<Hit>, KbError> {
        let q = self.kb.encoder().encode(text)?;
        self.index(kind).retrieve(&q, k)
    }
}

/// The bundled seed corpus.
pub fn seed_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::default();
    for rec in store::seed_records() {
        kb.add_entry(rec.kind, &rec.description, &rec.snippet, &rec.rephrasings)
            .unwrap_or_else(|e| panic!("seed corpus entry {:?} is invalid: {e}", rec.description));
    }
    kb
}
