//! End-to-end orchestration: generation cells, scene selection, evaluation and finetuning.
//!
//! A cell is one (base scenario, scenario, route) triple. Generation runs each
//! cell's refinement schedule, keeps its most adversarial scenes and persists
//! everything under an artifact directory:
//!
//! ```text
//! out/
//!   config.toml
//!   scripts/  <Base>-<i>.scene, <Base>-<i>.retrieval.json
//!   state/    <cell>.json (sampler state), <cell>.runs.jsonl
//!   traces/   <cell>-k<rank>.jsonl
//!   reports/  cells.jsonl, selected.jsonl, generation.{json,tsv}, table.tsv, ...
//! ```

pub mod config;
mod experiment;
mod generate;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kb::KbError;
use crate::metrics::MetricsError;
use crate::pipeline::{BaseScenario, PipelineError};
use crate::policy::PolicyError;
use crate::sampler::{Outcome, ParamAssignment, SamplerError};
use crate::sim::SimError;

pub use config::{FinetuneSettings, RunConfig};
pub use experiment::{evaluate_policies, load_selected, run_finetune_eval, selected_scenes, FinetuneReport};
pub use generate::{run_generation, CellSummary, GenerationSummary, SelectedScene, SURROGATE};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

/// Outcome of one simulated scene within a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub index: u64,
    pub assignment: ParamAssignment,
    pub collided: bool,
    pub os: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub collided: bool,
    pub os: f64,
}

impl Outcome for SceneOutcome {
    fn collided(&self) -> bool {
        self.collided
    }
}

/// A chosen scene: position in the candidate list, and whether it only fills the quota.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub position: usize,
    pub padded: bool,
}

/// The `n` collision results with the lowest overall score, ties broken by sample index.
///
/// With fewer than `n` collisions, every collision is returned followed by the
/// lowest-scoring non-collisions, flagged as padded.
pub fn select_adversarial_scenes(results: &[SceneResult], n: usize) -> Vec<Selection> {
    let ranked = |collided: bool| {
        let mut v: Vec<usize> = (0..results.len())
            .filter(|&i| results[i].collided == collided)
            .collect();
        v.sort_by(|&a, &b| {
            results[a]
                .os
                .total_cmp(&results[b].os)
                .then(results[a].index.cmp(&results[b].index))
        });
        v
    };
    let mut out: Vec<Selection> = ranked(true)
        .into_iter()
        .take(n)
        .map(|position| Selection {
            position,
            padded: false,
        })
        .collect();
    let missing = n - out.len();
    out.extend(
        ranked(false)
            .into_iter()
            .take(missing)
            .map(|position| Selection { position, padded: true }),
    );
    out
}

/// Identifier of a generation cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub base: BaseScenario,
    pub scenario: u32,
    pub route: usize,
}

impl CellId {
    pub fn scenario_name(&self) -> String {
        format!("{}-{}", self.base, self.scenario)
    }

    pub fn name(&self) -> String {
        format!("{}-{}-r{}", self.base, self.scenario, self.route)
    }

    /// Seed for this cell's sampler, derived from the run seed.
    pub fn seed(&self, run_seed: u64) -> u64 {
        let digest = Sha256::digest(format!("{run_seed}/{}", self.name()).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write via a temporary sibling and rename, so readers never see partial files.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("record serializes") + "\n")
        .collect()
}

pub(crate) fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>, HarnessError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Artifact {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
