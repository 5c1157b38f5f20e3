//! Prompt templates, the scenario corpus and fixture generation.

use serde::Deserialize;

use super::client::{prompt_key, FixtureRecord, FIXTURE_SCHEMA_VERSION};
use super::{BaseScenario, Decomposition};

/// Text with `{name}` placeholders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        PromptTemplate {
            name: name.into(),
            text: text.into(),
        }
    }

    /// Scenario-description prompt; placeholders `{setting}` and `{index}`.
    pub fn describe() -> Self {
        PromptTemplate::new("describe", include_str!("../../data/prompts/describe.txt"))
    }

    /// Few-shot decomposition prompt; placeholder `{description}`.
    pub fn decompose() -> Self {
        PromptTemplate::new("decompose", include_str!("../../data/prompts/decompose.txt"))
    }

    /// Snippet-authoring prompt; placeholders `{setting}` and `{index}`.
    pub fn snippet() -> Self {
        PromptTemplate::new("snippet", include_str!("../../data/prompts/snippet.txt"))
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            let tail = &rest[open + 1..];
            match tail.find('}') {
                Some(close) if tail[..close].chars().all(|c| c.is_ascii_lowercase() || c == '_') && close > 0 => {
                    if !out.contains(&&tail[..close]) {
                        out.push(&tail[..close]);
                    }
                    rest = &tail[close + 1..];
                }
                _ => rest = tail,
            }
        }
        out
    }

    /// Substitute every `{name}`; unknown names are left as-is.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }
}

/// One authored scenario with its reference decomposition.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ScenarioRecord {
    pub base: BaseScenario,
    pub index: u32,
    pub description: String,
    pub behavior: String,
    pub geometry: String,
    pub spawn: String,
}

impl ScenarioRecord {
    pub fn decomposition(&self) -> Decomposition {
        Decomposition {
            behavior: self.behavior.clone(),
            geometry: self.geometry.clone(),
            spawn: self.spawn.clone(),
        }
    }
}

#[derive(Deserialize)]
struct CorpusFile {
    scenario: Vec<ScenarioRecord>,
}

/// The bundled corpus: five scenarios for each of the eight base scenarios.
pub fn scenario_corpus() -> Vec<ScenarioRecord> {
    toml::from_str::<CorpusFile>(include_str!("../../data/scenarios.toml"))
        .expect("bundled scenario corpus is valid TOML")
        .scenario
}

/// `(scenario, decomposition)` pairs embedded in the decomposition prompt.
pub fn few_shot_examples() -> Vec<(String, Decomposition)> {
    let text = PromptTemplate::decompose().text;
    let mut out = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(l) = lines.next() {
        let Some(scenario) = l.strip_prefix("Scenario: ") else {
            continue;
        };
        if scenario.contains("{description}") {
            break;
        }
        let block: Vec<&str> = lines.by_ref().take(3).collect();
        let d = super::extract_fields(&block.join("\n")).expect("few-shot block has all three fields");
        out.push((scenario.to_string(), d));
    }
    out
}

/// Render the description prompt for one corpus slot.
pub fn describe_prompt(template: &PromptTemplate, base: BaseScenario, index: u32) -> String {
    template.render(&[("setting", base.display_name()), ("index", &index.to_string())])
}

pub fn decompose_prompt(template: &PromptTemplate, description: &str) -> String {
    template.render(&[("description", description.trim())])
}

/// Fixture records answering every prompt the offline pipeline issues.
pub fn render_fixture_records() -> Vec<FixtureRecord> {
    let describe = PromptTemplate::describe();
    let decompose = PromptTemplate::decompose();
    let mut out = Vec::new();
    let mut push = |label: String, prompt: String, response: String| {
        out.push(FixtureRecord {
            v: FIXTURE_SCHEMA_VERSION,
            key: prompt_key(&prompt),
            label,
            response,
        })
    };
    for s in scenario_corpus() {
        push(
            format!("describe/{}/{}", s.base.as_str(), s.index),
            describe_prompt(&describe, s.base, s.index),
            s.description.clone(),
        );
        push(
            format!("decompose/{}/{}", s.base.as_str(), s.index),
            decompose_prompt(&decompose, &s.description),
            s.decomposition().format(),
        );
    }
    for (i, (scenario, d)) in few_shot_examples().into_iter().enumerate() {
        push(
            format!("decompose/example/{}", i + 1),
            decompose_prompt(&decompose, &scenario),
            d.format(),
        );
    }
    out
}

/// JSON-lines text of [`render_fixture_records`].
pub fn render_fixture_file() -> String {
    render_fixture_records()
        .iter()
        .map(|r| serde_json::to_string(r).expect("fixture record serializes") + "\n")
        .collect()
}
