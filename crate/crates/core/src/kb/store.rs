//! Line-oriented persistence and the bundled seed corpus.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Embedding, Encoder, EntryId, KbError, KnowledgeBase};
use crate::dsl::ComponentKind;

pub const KB_SCHEMA_VERSION: u32 = 1;

/// One knowledge-base entry per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub v: u32,
    pub id: EntryId,
    pub kind: ComponentKind,
    pub description: String,
    pub rephrasings: Vec<String>,
    pub snippet_text: String,
}

/// One embedding sidecar row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: EntryId,
    pub variant: usize,
    pub vector: Vec<f64>,
}

#[derive(Deserialize)]
struct SeedFile {
    entry: Vec<SeedRecord>,
}

#[derive(Clone, Debug, Deserialize)]
pub(crate) struct SeedRecord {
    pub kind: ComponentKind,
    pub description: String,
    pub rephrasings: Vec<String>,
    pub snippet: String,
}

const SEED_KB: &str = include_str!("../../data/seed_kb.toml");

pub(crate) fn seed_records() -> Vec<SeedRecord> {
    toml::from_str::<SeedFile>(SEED_KB)
        .expect("bundled seed corpus is valid TOML")
        .entry
}

/// Seed corpus with the last rephrasing of every entry withheld; returns the
/// withheld `(entry, text)` pairs for retrieval evaluation.
pub fn seed_kb_with_holdout() -> (KnowledgeBase, Vec<(EntryId, String)>) {
    let mut kb = KnowledgeBase::default();
    let mut held = Vec::new();
    for rec in seed_records() {
        let (last, kept) = rec.rephrasings.split_last().expect("seed entries carry rephrasings");
        let id = kb
            .add_entry(rec.kind, &rec.description, &rec.snippet, kept)
            .unwrap_or_else(|e| panic!("seed corpus entry {:?} is invalid: {e}", rec.description));
        held.push((id, last.clone()));
    }
    (kb, held)
}

fn record_err(line: usize, e: impl std::fmt::Display) -> KbError {
    KbError::Record {
        line,
        message: e.to_string(),
    }
}

impl KnowledgeBase {
    pub fn write_records(&self, mut out: impl Write) -> Result<(), KbError> {
        for e in &self.entries {
            let rec = EntryRecord {
                v: KB_SCHEMA_VERSION,
                id: e.id,
                kind: e.kind,
                description: e.description.clone(),
                rephrasings: e.rephrasings.clone(),
                snippet_text: e.snippet_text.clone(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(|e| record_err(0, e))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_embeddings(&self, mut out: impl Write) -> Result<(), KbError> {
        for e in &self.entries {
            for (variant, emb) in e.embeddings.iter().enumerate() {
                let row = EmbeddingRow {
                    id: e.id,
                    variant,
                    vector: emb.as_slice().to_vec(),
                };
                serde_json::to_writer(&mut out, &row).map_err(|e| record_err(0, e))?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Rebuild from entry records, re-embedding with `encoder`. Ids are preserved.
    pub fn read_records(input: impl BufRead, encoder: Arc<dyn Encoder>) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::new(encoder);
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| record_err(i + 1, e))?;
            if rec.v != KB_SCHEMA_VERSION {
                return Err(record_err(i + 1, format!("unsupported schema version {}", rec.v)));
            }
            if kb.entry(rec.id).is_some() {
                return Err(record_err(i + 1, format!("duplicate id {}", rec.id)));
            }
            kb.add_entry(rec.kind, &rec.description, &rec.snippet_text, &rec.rephrasings)?;
            let last = kb.entries.last_mut().expect("entry just added");
            last.id = rec.id;
        }
        Ok(kb)
    }

    /// Overwrite embeddings from sidecar rows produced by any encoder.
    pub fn import_embeddings(&mut self, input: impl BufRead) -> Result<usize, KbError> {
        let mut n = 0;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: EmbeddingRow = serde_json::from_str(&line).map_err(|e| record_err(i + 1, e))?;
            let emb = Embedding::normalized(row.vector)?;
            self.set_embedding(row.id, row.variant, emb)?;
            n += 1;
        }
        Ok(n)
    }

    /// Write `entries.jsonl` and `embeddings.jsonl` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), KbError> {
        std::fs::create_dir_all(dir)?;
        let mut a = std::io::BufWriter::new(std::fs::File::create(dir.join("entries.jsonl"))?);
        self.write_records(&mut a)?;
        a.flush()?;
        let mut b = std::io::BufWriter::new(std::fs::File::create(dir.join("embeddings.jsonl"))?);
        self.write_embeddings(&mut b)?;
        b.flush()?;
        Ok(())
    }

    /// Load a directory written by [`KnowledgeBase::save_dir`]. The sidecar is optional.
    pub fn load_dir(dir: &Path, encoder: Arc<dyn Encoder>) -> Result<Self, KbError> {
        let f = std::io::BufReader::new(std::fs::File::open(dir.join("entries.jsonl"))?);
        let mut kb = KnowledgeBase::read_records(f, encoder)?;
        let side = dir.join("embeddings.jsonl");
        if side.exists() {
            kb.import_embeddings(std::io::BufReader::new(std::fs::File::open(side)?))?;
        }
        Ok(kb)
    }
}
