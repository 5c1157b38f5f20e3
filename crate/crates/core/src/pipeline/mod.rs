//! Description generation, decomposition and retrieval-driven script assembly.

mod client;
mod prompts;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    assemble_script, validate, AssembleError, ComponentKind, Maneuver, RoadSpec, SceneScript, ValidationReport,
};
use crate::kb::{EntryId, FrozenKb, Hit, KbError};

#[cfg(feature = "http")]
pub use client::HttpClient;
pub use client::{prompt_key, FixtureClient, FixtureRecord, TextGenClient, FIXTURE_SCHEMA_VERSION};
pub use prompts::{
    decompose_prompt, describe_prompt, few_shot_examples, render_fixture_file, render_fixture_records, scenario_corpus,
    PromptTemplate, ScenarioRecord,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("text generation failed: {0}")]
    Client(String),
    #[error("no fixture for prompt key {key}")]
    MissingFixture { key: String },
    #[error("fixture line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("missing field(s): {}", .missing.join(", "))]
    Extraction { missing: Vec<&'static str> },
    #[error("empty description")]
    EmptyDescription,
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error("assembled script fails validation: {0:?}")]
    Invalid(ValidationReport),
}

/// The eight base traffic scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseScenario {
    StraightObstacle,
    TurningObstacle,
    LaneChanging,
    VehiclePassing,
    RedLightRunning,
    UnprotectedLeftTurn,
    RightTurn,
    CrossingNegotiation,
}

impl BaseScenario {
    pub const ALL: [BaseScenario; 8] = [
        BaseScenario::StraightObstacle,
        BaseScenario::TurningObstacle,
        BaseScenario::LaneChanging,
        BaseScenario::VehiclePassing,
        BaseScenario::RedLightRunning,
        BaseScenario::UnprotectedLeftTurn,
        BaseScenario::RightTurn,
        BaseScenario::CrossingNegotiation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaseScenario::StraightObstacle => "StraightObstacle",
            BaseScenario::TurningObstacle => "TurningObstacle",
            BaseScenario::LaneChanging => "LaneChanging",
            BaseScenario::VehiclePassing => "VehiclePassing",
            BaseScenario::RedLightRunning => "RedLightRunning",
            BaseScenario::UnprotectedLeftTurn => "UnprotectedLeftTurn",
            BaseScenario::RightTurn => "RightTurn",
            BaseScenario::CrossingNegotiation => "CrossingNegotiation",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            BaseScenario::StraightObstacle => "Straight Obstacle",
            BaseScenario::TurningObstacle => "Turning Obstacle",
            BaseScenario::LaneChanging => "Lane Changing",
            BaseScenario::VehiclePassing => "Vehicle Passing",
            BaseScenario::RedLightRunning => "Red-light Running",
            BaseScenario::UnprotectedLeftTurn => "Unprotected Left-turn",
            BaseScenario::RightTurn => "Right-turn",
            BaseScenario::CrossingNegotiation => "Crossing Negotiation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        BaseScenario::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
    }

    /// Geometry family the base scenario is played on.
    pub fn road(self) -> RoadSpec {
        match self {
            BaseScenario::StraightObstacle | BaseScenario::VehiclePassing => {
                RoadSpec::StraightRoad { lanes_per_direction: 1 }
            }
            BaseScenario::LaneChanging => RoadSpec::StraightRoad { lanes_per_direction: 2 },
            BaseScenario::TurningObstacle | BaseScenario::RedLightRunning | BaseScenario::RightTurn => {
                RoadSpec::FourWayIntersection { signalized: true }
            }
            BaseScenario::UnprotectedLeftTurn | BaseScenario::CrossingNegotiation => {
                RoadSpec::FourWayIntersection { signalized: false }
            }
        }
    }

    /// Ego route families of the base scenario.
    pub fn maneuvers(self) -> &'static [Maneuver] {
        match self {
            BaseScenario::StraightObstacle
            | BaseScenario::VehiclePassing
            | BaseScenario::RedLightRunning
            | BaseScenario::CrossingNegotiation => &[Maneuver::Straight],
            BaseScenario::TurningObstacle => &[Maneuver::LeftTurn, Maneuver::RightTurn],
            BaseScenario::LaneChanging => &[Maneuver::LaneChange],
            BaseScenario::UnprotectedLeftTurn => &[Maneuver::LeftTurn],
            BaseScenario::RightTurn => &[Maneuver::RightTurn],
        }
    }
}

impl fmt::Display for BaseScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-component sub-descriptions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub behavior: String,
    pub geometry: String,
    pub spawn: String,
}

impl Decomposition {
    pub fn get(&self, kind: ComponentKind) -> &str {
        match kind {
            ComponentKind::Behavior => &self.behavior,
            ComponentKind::Geometry => &self.geometry,
            ComponentKind::SpawnPosition => &self.spawn,
        }
    }

    /// Three labelled lines, the inverse of [`extract_fields`].
    pub fn format(&self) -> String {
        format!(
            "Behavior: {}\nGeometry: {}\nSpawn Position: {}\n",
            self.behavior, self.geometry, self.spawn
        )
    }
}

fn field_regexes() -> &'static [(&'static str, Regex); 3] {
    static RE: OnceLock<[(&'static str, Regex); 3]> = OnceLock::new();
    RE.get_or_init(|| {
        let re = |label: &str| {
            Regex::new(&format!(r"(?im)^[ \t]*{label}[ \t]*:[ \t]*(\S[^\r\n]*?)[ \t]*\r?$")).expect("static regex")
        };
        [
            ("Behavior", re("behavior")),
            ("Geometry", re("geometry")),
            ("Spawn Position", re(r"spawn[ \t]+position")),
        ]
    })
}

/// Pull the three labelled fields out of structured text. Labels match
/// case-insensitively in any order; the first occurrence of each wins.
pub fn extract_fields(text: &str) -> Result<Decomposition, PipelineError> {
    let mut found: [Option<String>; 3] = Default::default();
    let mut missing = Vec::new();
    for (slot, (label, re)) in found.iter_mut().zip(field_regexes()) {
        match re.captures(text) {
            Some(c) => *slot = Some(c[1].to_string()),
            None => missing.push(*label),
        }
    }
    match found {
        [Some(behavior), Some(geometry), Some(spawn)] => Ok(Decomposition {
            behavior,
            geometry,
            spawn,
        }),
        _ => Err(PipelineError::Extraction { missing }),
    }
}

/// Ask `client` for description number `index` of `base`.
pub fn generate_description(
    base: BaseScenario,
    index: u32,
    client: &dyn TextGenClient,
    template: &PromptTemplate,
) -> Result<String, PipelineError> {
    let text = client.complete(&describe_prompt(template, base, index))?;
    let text = text.trim();
    if text.is_empty() {
        return Err(PipelineError::EmptyDescription);
    }
    Ok(text.to_string())
}

/// Split a full description into component sub-descriptions via `client`.
pub fn decompose(full_description: &str, client: &dyn TextGenClient) -> Result<Decomposition, PipelineError> {
    decompose_with(full_description, client, &PromptTemplate::decompose())
}

pub fn decompose_with(
    full_description: &str,
    client: &dyn TextGenClient,
    template: &PromptTemplate,
) -> Result<Decomposition, PipelineError> {
    if full_description.trim().is_empty() {
        return Err(PipelineError::EmptyDescription);
    }
    extract_fields(&client.complete(&decompose_prompt(template, full_description))?)
}

/// Retrieval record for one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentTrace {
    pub kind: ComponentKind,
    pub query: String,
    pub entry: EntryId,
    pub score: f64,
    pub runner_up: Option<Hit>,
    /// Runner-up within 1e-9 of the winner; insertion order decided.
    pub tie: bool,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub components: Vec<ComponentTrace>,
}

impl RetrievalTrace {
    pub fn warnings(&self) -> Vec<String> {
        self.components
            .iter()
            .filter(|c| c.low_confidence)
            .map(|c| format!("low-confidence {} retrieval (score {:.3})", c.kind, c.score))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComposeOptions {
    pub low_confidence: f64,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions { low_confidence: 0.2 }
    }
}

/// Retrieve the top entry per component and assemble a validated script.
pub fn compose_scene_script(
    decomp: &Decomposition,
    kb: &FrozenKb,
    opts: ComposeOptions,
) -> Result<(SceneScript, RetrievalTrace), PipelineError> {
    let mut trace = RetrievalTrace::default();
    let mut snippets = Vec::with_capacity(3);
    for kind in ComponentKind::ALL {
        let query = decomp.get(kind);
        let hits = kb.query(kind, query, 2)?;
        let best = hits[0];
        let runner_up = hits.get(1).copied();
        trace.components.push(ComponentTrace {
            kind,
            query: query.to_string(),
            entry: best.entry,
            score: best.score,
            runner_up,
            tie: runner_up.is_some_and(|r| (best.score - r.score).abs() < 1e-9),
            low_confidence: best.score < opts.low_confidence,
        });
        let entry = kb.entry(best.entry).ok_or(KbError::UnknownEntry(best.entry))?;
        snippets.push(entry.snippet.clone());
    }
    let mut it = snippets.into_iter();
    let (b, g, s) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let script = assemble_script(b, g, s)?;
    let report = validate(&script);
    if !report.is_ok() {
        return Err(PipelineError::Invalid(report));
    }
    Ok((script, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_well_formed_and_reordered() {
        let d = extract_fields("Behavior: a\nGeometry: b\nSpawn Position: c").unwrap();
        assert_eq!(
            (d.behavior.as_str(), d.geometry.as_str(), d.spawn.as_str()),
            ("a", "b", "c")
        );
        let r = extract_fields("  spawn position :  c  \nGEOMETRY: b\r\nbehavior:a\n").unwrap();
        assert_eq!(r, d);
    }

    #[test]
    fn extract_reports_missing() {
        match extract_fields("") {
            Err(PipelineError::Extraction { missing }) => {
                assert_eq!(missing, ["Behavior", "Geometry", "Spawn Position"])
            }
            other => panic!("{other:?}"),
        }
        match extract_fields("Behavior: x\nGeometry: y\n") {
            Err(PipelineError::Extraction { missing }) => assert_eq!(missing, ["Spawn Position"]),
            other => panic!("{other:?}"),
        }
        assert!(extract_fields("Behavior:\nGeometry: y\nSpawn Position: z").is_err());
    }

    #[test]
    fn base_scenarios_cover_their_maneuvers() {
        for b in BaseScenario::ALL {
            for m in b.maneuvers() {
                assert!(crate::dsl::maneuvers_for(b.road()).contains(m), "{b}");
            }
            assert_eq!(BaseScenario::from_name(b.as_str()), Some(b));
        }
    }
}
