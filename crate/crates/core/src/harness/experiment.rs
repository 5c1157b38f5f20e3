use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{load_script, run_generation, with_pool, SelectedScene, SURROGATE};
use super::{jsonl, parse_jsonl, read_text, write_atomic, HarnessError, RunConfig, ARTIFACT_SCHEMA_VERSION};
use crate::metrics::{aggregate, compute_scene_metrics, MetricWeights, ScenarioReport, SceneRecord};
use crate::policy::{evaluate, finetune, GenerationLog, PolicyParams, TrainingScore};
use crate::sim::{build_scene, run, SceneConfig};

/// Selected scenes listed in an artifact directory.
pub fn load_selected(out: &Path) -> Result<Vec<SelectedScene>, HarnessError> {
    let path = out.join("reports").join("selected.jsonl");
    parse_jsonl(&path, &read_text(&path)?)
}

/// Selected scenes with their rebuilt scene configurations.
pub fn selected_scenes(out: &Path) -> Result<Vec<(SelectedScene, SceneConfig)>, HarnessError> {
    let mut scripts = BTreeMap::new();
    let mut scenes = Vec::new();
    for s in load_selected(out)? {
        let key = s.cell.scenario_name();
        if !scripts.contains_key(&key) {
            scripts.insert(key.clone(), load_script(out, &s.cell)?);
        }
        let config = build_scene(&scripts[&key], &s.assignment, s.cell.route)?;
        scenes.push((s, config));
    }
    Ok(scenes)
}

fn selected_or_generate(config: &RunConfig) -> Result<Vec<(SelectedScene, SceneConfig)>, HarnessError> {
    if !config.out.join("reports").join("selected.jsonl").exists() {
        run_generation(config)?;
    }
    selected_scenes(&config.out)
}

fn records(
    scenes: &[(SelectedScene, SceneConfig)],
    policy: &str,
    params: &PolicyParams,
    weights: &MetricWeights,
) -> Result<Vec<SceneRecord>, HarnessError> {
    scenes
        .par_iter()
        .map(|(s, scene)| {
            let trace = run(scene, params, s.sample_index);
            Ok(SceneRecord {
                base: s.cell.base.to_string(),
                scenario: s.cell.scenario_name(),
                policy: policy.to_string(),
                metrics: compute_scene_metrics(&trace, weights)?,
                adversary_path: trace.adversary_path(),
                padded: s.padded,
            })
        })
        .collect()
}

/// Run the surrogate and every configured policy on the selected scenes.
pub fn evaluate_policies(config: &RunConfig) -> Result<ScenarioReport, HarnessError> {
    config.validate()?;
    let scenes = selected_or_generate(config)?;
    let mut policies = vec![(SURROGATE.to_string(), config.surrogate)];
    policies.extend(config.policies.iter().map(|(k, v)| (k.clone(), *v)));
    let all = with_pool(config.workers, || -> Result<Vec<SceneRecord>, HarnessError> {
        let mut all = Vec::new();
        for (name, params) in &policies {
            all.extend(records(&scenes, name, params, &config.weights)?);
        }
        Ok(all)
    })??;
    let report = aggregate(&all, false);
    let dir = config.out.join("reports");
    write_atomic(&dir.join("eval_scenes.jsonl"), &jsonl(&all))?;
    write_atomic(&dir.join("eval.json"), &(report.to_json() + "\n"))?;
    write_atomic(&dir.join("eval.tsv"), &report.to_tsv())?;
    write_atomic(&dir.join("eval_table.tsv"), &report.to_table())?;
    Ok(report)
}

/// Finetune experiment outcome, written to `reports/finetune.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub v: u32,
    pub seed: u64,
    pub train_routes: Vec<usize>,
    pub test_routes: Vec<usize>,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub before: PolicyParams,
    pub after: PolicyParams,
    pub train_before: TrainingScore,
    pub train_after: TrainingScore,
    pub test_before: TrainingScore,
    pub test_after: TrainingScore,
    /// Held-out results for policies `pre` and `finetuned`.
    pub table: ScenarioReport,
    pub log: Vec<GenerationLog>,
}

/// Finetune on selected scenes of the training routes and compare on the held-out routes.
///
/// Runs generation first when the artifact directory has no selection yet.
pub fn run_finetune_eval(config: &RunConfig) -> Result<FinetuneReport, HarnessError> {
    config.validate()?;
    let scenes = selected_or_generate(config)?;
    let settings = &config.finetune;
    let (train, test): (Vec<_>, Vec<_>) = scenes
        .into_iter()
        .partition(|(s, _)| settings.train_routes.contains(&s.cell.route));
    if train.is_empty() || test.is_empty() {
        return Err(HarnessError::Config(format!(
            "finetune split is empty: {} train and {} test scenes",
            train.len(),
            test.len()
        )));
    }
    let test_routes: Vec<usize> = (0..config.routes)
        .filter(|r| !settings.train_routes.contains(r))
        .collect();
    let before = settings.policy.unwrap_or(config.surrogate);
    let train_cfgs: Vec<SceneConfig> = train.iter().map(|(_, c)| c.clone()).collect();
    let test_cfgs: Vec<SceneConfig> = test.iter().map(|(_, c)| c.clone()).collect();

    let result = with_pool(config.workers, || {
        finetune(
            &before,
            &train_cfgs,
            settings.eval_budget,
            config.seed,
            &settings.cem,
            &config.weights,
        )
    })??;
    let after = result.params;
    let mut recs = records(&test, "pre", &before, &config.weights)?;
    recs.extend(records(&test, "finetuned", &after, &config.weights)?);
    let report = FinetuneReport {
        v: ARTIFACT_SCHEMA_VERSION,
        seed: config.seed,
        train_routes: settings.train_routes.clone(),
        test_routes,
        train_scenes: train.len(),
        test_scenes: test.len(),
        before,
        after,
        train_before: result.initial,
        train_after: result.score,
        test_before: evaluate(&before, &test_cfgs, &config.weights),
        test_after: evaluate(&after, &test_cfgs, &config.weights),
        table: aggregate(&recs, true),
        log: result.log,
    };

    let dir = config.out.join("reports");
    write_atomic(
        &dir.join("finetune.json"),
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    write_atomic(&dir.join("finetune.tsv"), &report.table.to_table())?;
    write_atomic(&dir.join("finetune_log.jsonl"), &jsonl(&report.log))?;
    write_atomic(
        &config.out.join("state").join("finetuned_policy.toml"),
        &toml::to_string(&after).expect("params serialize"),
    )?;
    Ok(report)
}
