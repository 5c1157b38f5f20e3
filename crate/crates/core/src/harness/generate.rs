use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    jsonl, parse_jsonl, read_text, select_adversarial_scenes, write_atomic, CellId, HarnessError, RunConfig,
    SceneOutcome, SceneResult, ARTIFACT_SCHEMA_VERSION,
};
use crate::dsl::SceneScript;
use crate::kb::{seed_kb, HashingEncoder, KnowledgeBase};
use crate::metrics::{aggregate, compute_scene_metrics, ScenarioReport, SceneRecord};
use crate::pipeline::{
    compose_scene_script, decompose, generate_description, ComposeOptions, FixtureClient, PromptTemplate,
    RetrievalTrace, TextGenClient,
};
use crate::sampler::{run_window, ParamAssignment, SampleState, Schedule};
use crate::sim::{build_scene, run};

/// Policy id under which generation records surrogate results.
pub const SURROGATE: &str = "surrogate";

/// A scene kept by selection, as listed in `reports/selected.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedScene {
    pub v: u32,
    pub cell: CellId,
    pub rank: usize,
    pub sample_index: u64,
    pub assignment: ParamAssignment,
    pub collided: bool,
    pub os: f64,
    pub padded: bool,
    /// Trace path relative to the artifact directory.
    pub trace: String,
}

/// Per-cell outcome, as listed in `reports/cells.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub v: u32,
    pub cell: CellId,
    pub sims: usize,
    pub collisions: usize,
    pub selected: usize,
    pub padded: usize,
    /// Final sampling range per parameter.
    pub ranges: Vec<(String, f64, f64)>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GenerationSummary {
    pub out: PathBuf,
    pub cells: Vec<CellSummary>,
    pub selected: Vec<SelectedScene>,
    pub report: ScenarioReport,
}

impl GenerationSummary {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

#[derive(Serialize)]
struct RetrievalRecord<'a> {
    v: u32,
    description: &'a str,
    trace: &'a RetrievalTrace,
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    v: u32,
    #[serde(flatten)]
    result: SceneResult,
}

pub(crate) fn client_for(config: &RunConfig) -> Result<FixtureClient, HarnessError> {
    match &config.fixtures {
        Some(p) => FixtureClient::from_path(p).map_err(|e| HarnessError::Config(format!("fixtures: {e}"))),
        None => Ok(FixtureClient::bundled()),
    }
}

pub(crate) fn script_path(out: &Path, cell: &CellId) -> PathBuf {
    out.join("scripts").join(format!("{}.scene", cell.scenario_name()))
}

fn compose(
    cell: &CellId,
    client: &dyn TextGenClient,
    kb: &crate::kb::FrozenKb,
    out: &Path,
) -> Result<SceneScript, HarnessError> {
    let text = generate_description(cell.base, cell.scenario, client, &PromptTemplate::describe())?;
    let decomp = decompose(&text, client)?;
    let (script, trace) = compose_scene_script(&decomp, kb, ComposeOptions::default())?;
    write_atomic(&script_path(out, cell), &script.to_text())?;
    let record = RetrievalRecord {
        v: ARTIFACT_SCHEMA_VERSION,
        description: &text,
        trace: &trace,
    };
    write_atomic(
        &out.join("scripts")
            .join(format!("{}.retrieval.json", cell.scenario_name())),
        &(serde_json::to_string_pretty(&record).expect("record serializes") + "\n"),
    )?;
    Ok(script)
}

/// Load a saved sampler state and its run log, if they belong to this cell and run.
fn resume(
    state_path: &Path,
    runs_path: &Path,
    fresh: &SampleState,
    sims: usize,
) -> Option<(SampleState, Vec<SceneResult>)> {
    let state = SampleState::from_json(&std::fs::read_to_string(state_path).ok()?).ok()?;
    let same_params = state.params.len() == fresh.params.len()
        && state
            .params
            .iter()
            .zip(&fresh.params)
            .all(|(a, b)| a.name == b.name && a.original == b.original);
    if state.seed != fresh.seed || !same_params || state.samples_drawn as usize > sims {
        return None;
    }
    let text = std::fs::read_to_string(runs_path).unwrap_or_default();
    let runs: Vec<RunRecord> = parse_jsonl(runs_path, &text).ok()?;
    let runs: Vec<SceneResult> = runs
        .into_iter()
        .map(|r| r.result)
        .filter(|r| r.index < state.samples_drawn)
        .collect();
    (runs.len() == state.samples_drawn as usize).then_some((state, runs))
}

struct CellOutput {
    summary: CellSummary,
    selected: Vec<SelectedScene>,
    records: Vec<SceneRecord>,
}

fn run_cell(config: &RunConfig, cell: CellId, script: &SceneScript, out: &Path) -> Result<CellOutput, HarnessError> {
    let name = cell.name();
    let state_path = out.join("state").join(format!("{name}.json"));
    let runs_path = out.join("state").join(format!("{name}.runs.jsonl"));
    let cell_seed = cell.seed(config.seed);
    let fresh = SampleState::new(&script.params, cell_seed)?;
    let (mut state, mut results) = resume(&state_path, &runs_path, &fresh, config.sims).unwrap_or((fresh, Vec::new()));
    let schedule = Schedule {
        n_total: config.sims,
        refine_every: config.refine_every,
    };
    schedule.check()?;

    let runner = |index: u64, a: &ParamAssignment| -> Result<SceneOutcome, HarnessError> {
        let scene = build_scene(script, a, cell.route)?;
        let trace = run(&scene, &config.surrogate, cell_seed ^ index);
        let m = compute_scene_metrics(&trace, &config.weights)?;
        Ok(SceneOutcome {
            collided: m.cr == 1,
            os: m.os,
        })
    };
    while (state.samples_drawn as usize) < config.sims {
        let window = run_window(&mut state, schedule, &runner)?;
        results.extend(window.into_iter().map(|r| SceneResult {
            index: r.index,
            assignment: r.assignment,
            collided: r.outcome.collided,
            os: r.outcome.os,
        }));
        let records: Vec<RunRecord> = results
            .iter()
            .map(|r| RunRecord {
                v: ARTIFACT_SCHEMA_VERSION,
                result: r.clone(),
            })
            .collect();
        write_atomic(&runs_path, &jsonl(&records))?;
        write_atomic(&state_path, &(state.to_json() + "\n"))?;
    }

    let picks = select_adversarial_scenes(&results, config.selected);
    let mut selected = Vec::with_capacity(picks.len());
    let mut records = Vec::with_capacity(picks.len());
    for (rank, pick) in picks.iter().enumerate() {
        let r = &results[pick.position];
        let scene = build_scene(script, &r.assignment, cell.route)?;
        let trace = run(&scene, &config.surrogate, cell_seed ^ r.index);
        let rel = format!("traces/{name}-k{rank}.jsonl");
        write_atomic(&out.join(&rel), &trace.to_jsonl())?;
        let metrics = compute_scene_metrics(&trace, &config.weights)?;
        records.push(SceneRecord {
            base: cell.base.to_string(),
            scenario: cell.scenario_name(),
            policy: SURROGATE.to_string(),
            metrics,
            adversary_path: trace.adversary_path(),
            padded: pick.padded,
        });
        selected.push(SelectedScene {
            v: ARTIFACT_SCHEMA_VERSION,
            cell,
            rank,
            sample_index: r.index,
            assignment: r.assignment.clone(),
            collided: r.collided,
            os: r.os,
            padded: pick.padded,
            trace: rel,
        });
    }
    Ok(CellOutput {
        summary: CellSummary {
            v: ARTIFACT_SCHEMA_VERSION,
            cell,
            sims: results.len(),
            collisions: results.iter().filter(|r| r.collided).count(),
            selected: selected.len(),
            padded: selected.iter().filter(|s| s.padded).count(),
            ranges: state
                .params
                .iter()
                .map(|p| (p.name.clone(), p.current.0, p.current.1))
                .collect(),
            error: None,
        },
        selected,
        records,
    })
}

fn failed(cell: CellId, e: &HarnessError) -> CellOutput {
    CellOutput {
        summary: CellSummary {
            v: ARTIFACT_SCHEMA_VERSION,
            cell,
            sims: 0,
            collisions: 0,
            selected: 0,
            padded: 0,
            ranges: Vec::new(),
            error: Some(e.to_string()),
        },
        selected: Vec::new(),
        records: Vec::new(),
    }
}

pub(crate) fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match workers {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| HarnessError::Config(format!("worker pool: {e}"))),
    }
}

/// Generate, simulate and select scenes for every configured cell.
///
/// Cell failures are recorded in the summary and do not stop other cells.
/// Re-running on an existing directory resumes from the saved sampler states.
pub fn run_generation(config: &RunConfig) -> Result<GenerationSummary, HarnessError> {
    config.validate()?;
    let out = config.out.clone();
    let client = client_for(config)?;
    let kb = match &config.kb {
        Some(dir) => KnowledgeBase::load_dir(dir, Arc::new(HashingEncoder::default()))
            .map_err(|e| HarnessError::Config(format!("kb {}: {e}", dir.display())))?,
        None => seed_kb(),
    }
    .freeze()?;
    let resolved = RunConfig {
        out: PathBuf::from("."),
        ..config.clone()
    };
    write_atomic(&out.join("config.toml"), &resolved.to_toml())?;

    let mut scenarios = Vec::new();
    for &base in &config.bases {
        for scenario in 1..=config.scenarios_per_base {
            let id = CellId {
                base,
                scenario,
                route: 0,
            };
            scenarios.push((id, compose(&id, &client, &kb, &out)));
        }
    }
    let cells: Vec<(CellId, &Result<SceneScript, HarnessError>)> = scenarios
        .iter()
        .flat_map(|(id, script)| (0..config.routes).map(move |route| (CellId { route, ..*id }, script)))
        .collect();

    let outputs: Vec<CellOutput> = with_pool(config.workers, || {
        cells
            .par_iter()
            .map(|(cell, script)| match script {
                Ok(s) => run_cell(config, *cell, s, &out).unwrap_or_else(|e| failed(*cell, &e)),
                Err(e) => failed(*cell, e),
            })
            .collect()
    })?;

    let summaries: Vec<CellSummary> = outputs.iter().map(|o| o.summary.clone()).collect();
    let selected: Vec<SelectedScene> = outputs.iter().flat_map(|o| o.selected.clone()).collect();
    let records: Vec<SceneRecord> = outputs.into_iter().flat_map(|o| o.records).collect();
    let report = aggregate(&records, false);

    let reports = out.join("reports");
    write_atomic(&reports.join("cells.jsonl"), &jsonl(&summaries))?;
    write_atomic(&reports.join("selected.jsonl"), &jsonl(&selected))?;
    write_atomic(&reports.join("scenes.jsonl"), &jsonl(&records))?;
    write_atomic(&reports.join("generation.json"), &(report.to_json() + "\n"))?;
    write_atomic(&reports.join("generation.tsv"), &report.to_tsv())?;
    write_atomic(&reports.join("table.tsv"), &report.to_table())?;

    Ok(GenerationSummary {
        out,
        cells: summaries,
        selected,
        report,
    })
}

/// Load a scenario's script from the artifact directory.
pub(crate) fn load_script(out: &Path, cell: &CellId) -> Result<SceneScript, HarnessError> {
    let path = script_path(out, cell);
    SceneScript::from_text(&read_text(&path)?).map_err(|e| HarnessError::Artifact {
        path,
        message: e.to_string(),
    })
}
