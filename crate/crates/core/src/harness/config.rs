use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::MetricWeights;
use crate::pipeline::BaseScenario;
use crate::policy::{CemConfig, PolicyParams};
use crate::sim::road::ROUTE_COUNT;

/// Scenarios authored per base scenario in the bundled corpus.
pub const SCENARIOS_PER_BASE_MAX: u32 = 5;

/// Train/test settings for the finetune experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    /// Routes whose selected scenes form the training split; the rest are held out.
    pub train_routes: Vec<usize>,
    /// Candidate evaluations allowed to the search.
    pub eval_budget: usize,
    /// Policy to finetune; the surrogate when absent.
    pub policy: Option<PolicyParams>,
    pub cem: CemConfig,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        FinetuneSettings {
            train_routes: vec![0],
            eval_budget: 320,
            policy: None,
            cem: CemConfig::default(),
        }
    }
}

/// Experiment configuration, loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub bases: Vec<BaseScenario>,
    pub scenarios_per_base: u32,
    /// Routes per scenario; route ids `0..routes`.
    pub routes: usize,
    /// Simulations per (scenario, route) cell.
    pub sims: usize,
    pub refine_every: usize,
    /// Scenes kept per cell.
    pub selected: usize,
    /// Worker threads for cells; all cores when absent.
    pub workers: Option<usize>,
    pub out: PathBuf,
    /// Fixture file replacing the bundled text-generation fixtures.
    pub fixtures: Option<PathBuf>,
    /// Knowledge-base directory replacing the seed knowledge base.
    pub kb: Option<PathBuf>,
    pub weights: MetricWeights,
    /// Policy driving the ego during generation and selection.
    pub surrogate: PolicyParams,
    /// Additional named policies for cross-policy evaluation.
    pub policies: BTreeMap<String, PolicyParams>,
    pub finetune: FinetuneSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            bases: BaseScenario::ALL.to_vec(),
            scenarios_per_base: 5,
            routes: 2,
            sims: 50,
            refine_every: 10,
            selected: 2,
            workers: None,
            out: PathBuf::from("out"),
            fixtures: None,
            kb: None,
            weights: MetricWeights::default(),
            surrogate: PolicyParams::default(),
            policies: BTreeMap::new(),
            finetune: FinetuneSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.bases.is_empty() {
            return bad("bases must not be empty".into());
        }
        for (name, v) in [
            ("scenarios_per_base", self.scenarios_per_base as usize),
            ("routes", self.routes),
            ("sims", self.sims),
            ("refine_every", self.refine_every),
            ("selected", self.selected),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.scenarios_per_base > SCENARIOS_PER_BASE_MAX {
            return bad(format!("scenarios_per_base is at most {SCENARIOS_PER_BASE_MAX}"));
        }
        if self.routes > ROUTE_COUNT {
            return bad(format!("routes is at most {ROUTE_COUNT}"));
        }
        if self.selected > self.sims {
            return bad(format!("selected ({}) exceeds sims ({})", self.selected, self.sims));
        }
        if self.refine_every > self.sims {
            return bad(format!(
                "refine_every ({}) exceeds sims ({})",
                self.refine_every, self.sims
            ));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        self.weights
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.surrogate
            .validate()
            .map_err(|e| HarnessError::Config(format!("surrogate: {e}")))?;
        for (name, p) in &self.policies {
            p.validate()
                .map_err(|e| HarnessError::Config(format!("policies.{name}: {e}")))?;
        }
        if let Some(p) = &self.finetune.policy {
            p.validate()
                .map_err(|e| HarnessError::Config(format!("finetune.policy: {e}")))?;
        }
        if let Some(r) = self.finetune.train_routes.iter().find(|r| **r >= self.routes) {
            return bad(format!("finetune.train_routes contains {r}, beyond routes"));
        }
        let cem = &self.finetune.cem;
        if cem.population == 0 || !(cem.elite_fraction > 0.0 && cem.elite_fraction <= 1.0) {
            return bad("finetune.cem needs population >= 1 and elite_fraction in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&cem.smoothing) || cem.smoothing == 0.0 {
            return bad("finetune.cem.smoothing must be in (0, 1]".into());
        }
        Ok(())
    }
}
