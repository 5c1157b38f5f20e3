//! Scene traces and their line-oriented file format.

use serde::{Deserialize, Serialize};

use super::geom::Vec2;
use super::{build_scene, run, Driver, SceneConfig, SimError};
use crate::dsl::{AgentClass, SceneScript};
use crate::policy::PolicyParams;
use crate::sampler::ParamAssignment;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Kinematic state of one agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Longitudinal acceleration over the last step, m/s².
    pub a: f64,
    /// Yaw rate over the last step, rad/s.
    pub w: f64,
}

impl AgentState {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: String,
    pub class: AgentClass,
    pub radius: f64,
}

/// First line of a trace file: everything needed to rebuild and replay the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub v: u32,
    pub script: String,
    pub assignment: ParamAssignment,
    pub route_id: usize,
    pub route_length: f64,
    pub driver: serde_json::Value,
    pub seed: u64,
    pub dt: f64,
    pub max_steps: u32,
    pub lane_width: f64,
    pub agents: Vec<AgentInfo>,
    pub initial: Vec<AgentState>,
}

impl TraceHeader {
    pub fn new(config: &SceneConfig, driver: &dyn Driver, seed: u64, initial: &[AgentState]) -> Self {
        TraceHeader {
            v: TRACE_SCHEMA_VERSION,
            script: config.script.to_text(),
            assignment: config.assignment.clone(),
            route_id: config.route.id,
            route_length: config.route.length(),
            driver: driver.describe(),
            seed,
            dt: config.dt,
            max_steps: config.max_steps,
            lane_width: config.lane_width(),
            agents: config
                .agents
                .iter()
                .map(|a| AgentInfo {
                    id: a.id.clone(),
                    class: a.class,
                    radius: a.class.radius(),
                })
                .collect(),
            initial: initial.to_vec(),
        }
    }
}

/// State after one step, with the ego's flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u32,
    pub t: f64,
    pub agents: Vec<AgentState>,
    pub collision: bool,
    /// Ego center more than half a lane from its route.
    pub lane_invasion: bool,
    /// Ego distance beyond the nearest lane edge, m.
    pub out_of_road: f64,
    pub red_light_violation: bool,
    pub stop_sign_violation: bool,
    /// Signed ego offset from the route, m (positive left).
    pub lateral_offset: f64,
    /// Monotone route-progress fraction.
    pub progress: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneTrace {
    pub header: TraceHeader,
    pub frames: Vec<Frame>,
}

impl SceneTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("frame serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| SimError::Trace("empty trace".into()))?;
        let header: TraceHeader = serde_json::from_str(first).map_err(|e| SimError::Trace(format!("header: {e}")))?;
        if header.v != TRACE_SCHEMA_VERSION {
            return Err(SimError::Trace(format!("unsupported schema version {}", header.v)));
        }
        let frames = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| SimError::Trace(format!("frame {}: {e}", i + 1))))
            .collect::<Result<Vec<Frame>, _>>()?;
        Ok(SceneTrace { header, frames })
    }

    pub fn collided(&self) -> bool {
        self.frames.iter().any(|f| f.collision)
    }

    /// Positions of agent `i`, starting with its initial position.
    pub fn path(&self, i: usize) -> Vec<(f64, f64)> {
        std::iter::once(&self.header.initial[i])
            .chain(self.frames.iter().map(|f| &f.agents[i]))
            .map(|a| (a.x, a.y))
            .collect()
    }

    /// Path of the first adversary.
    pub fn adversary_path(&self) -> Vec<(f64, f64)> {
        self.path(1)
    }
}

/// Outcome of re-running a recorded scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub frames: usize,
    pub identical: bool,
    /// First differing line (0 is the header), when not identical.
    pub first_difference: Option<usize>,
}

/// Rebuild the scene recorded in `text`, run it again, and compare bytes.
pub fn replay(text: &str) -> Result<ReplayReport, SimError> {
    let trace = SceneTrace::from_jsonl(text)?;
    let h = &trace.header;
    let script = SceneScript::from_text(&h.script).map_err(|e| SimError::Replay(e.to_string()))?;
    let config = build_scene(&script, &h.assignment, h.route_id)?;
    let policy: PolicyParams =
        serde_json::from_value(h.driver.clone()).map_err(|e| SimError::Replay(format!("driver description: {e}")))?;
    let again = run(&config, &policy, h.seed).to_jsonl();
    let first_difference = text.lines().zip(again.lines()).position(|(a, b)| a != b).or_else(|| {
        (text.lines().count() != again.lines().count()).then(|| text.lines().count().min(again.lines().count()))
    });
    Ok(ReplayReport {
        frames: trace.frames.len(),
        identical: first_difference.is_none(),
        first_difference,
    })
}
