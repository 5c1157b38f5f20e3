//! Four-section scene scripts: assembly, validation and the script file format.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::parser::{parse_snippet, MAX_TRY_DEPTH};
use super::print::{road, serialize};
use super::DslError;

/// Fixed map and model settings shared by every script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub model: String,
    pub dt: f64,
    pub max_steps: u32,
    pub lane_width: f64,
}

impl Default for Header {
    fn default() -> Self {
        Header {
            model: "kinematic-2d".to_string(),
            dt: 0.1,
            max_steps: 300,
            lane_width: 3.5,
        }
    }
}

impl Header {
    fn render(&self) -> String {
        format!(
            "model = {}\ndt = {}\nmax_steps = {}\nlane_width = {}\n",
            self.model, self.dt, self.max_steps, self.lane_width
        )
    }

    fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut h = Header::default();
        for (i, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            let bad = || ScriptError::Header(format!("line {}: `{l}`", i + 1));
            let (k, v) = l.split_once('=').ok_or_else(bad)?;
            let v = v.trim();
            match k.trim() {
                "model" => h.model = v.to_string(),
                "dt" => h.dt = v.parse().map_err(|_| bad())?,
                "max_steps" => h.max_steps = v.parse().map_err(|_| bad())?,
                "lane_width" => h.lane_width = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        if !(h.dt > 0.0 && h.lane_width > 0.0 && h.max_steps > 0) {
            return Err(ScriptError::Header(
                "dt, lane_width and max_steps must be positive".into(),
            ));
        }
        Ok(h)
    }
}

/// Assembled scene program.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneScript {
    pub header: Header,
    pub behavior: SnippetAst,
    pub geometry: SnippetAst,
    pub spawn: SnippetAst,
    /// Merged declarations; identical duplicates collapsed, conflicting ones kept.
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AssembleError {
    #[error("{slot} slot expects a {expected} snippet, got {found}")]
    KindMismatch {
        slot: ComponentKind,
        expected: ComponentKind,
        found: ComponentKind,
    },
    #[error("parameter `{name}` declared with conflicting ranges [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}]")]
    ParamConflict {
        name: String,
        a_lo: f64,
        a_hi: f64,
        b_lo: f64,
        b_hi: f64,
    },
    #[error("road `{road}` does not offer placement `{placement}`")]
    IncompatibleGeometry { road: String, placement: String },
    #[error("road `{road}` has no `{maneuver}` routes")]
    UnsupportedManeuver { road: String, maneuver: String },
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("missing section marker `{0}`")]
    MissingSection(&'static str),
    #[error("bad header: {0}")]
    Header(String),
    #[error("{section} section: {source}")]
    Snippet {
        section: ComponentKind,
        #[source]
        source: DslError,
    },
}

/// One finding of [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Issue {
    WrongSection {
        section: ComponentKind,
        found: ComponentKind,
    },
    UndeclaredParam(String),
    ParamConflict(String),
    InvalidParamName(String),
    InvalidRange(String),
    IncompatibleGeometry {
        road: String,
        placement: String,
    },
    UnsupportedManeuver {
        road: String,
        maneuver: String,
    },
    NestingTooDeep(usize),
    MissingStatement {
        section: ComponentKind,
        what: String,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::WrongSection { section, found } => write!(f, "{section} section holds a {found} snippet"),
            Issue::UndeclaredParam(n) => write!(f, "parameter `{n}` is used but never declared"),
            Issue::ParamConflict(n) => write!(f, "parameter `{n}` declared with conflicting ranges"),
            Issue::InvalidParamName(n) => write!(f, "`{n}` is not a valid parameter name"),
            Issue::InvalidRange(n) => write!(f, "parameter `{n}` has lo > hi"),
            Issue::IncompatibleGeometry { road, placement } => {
                write!(f, "road `{road}` does not offer placement `{placement}`")
            }
            Issue::UnsupportedManeuver { road, maneuver } => {
                write!(f, "road `{road}` has no `{maneuver}` routes")
            }
            Issue::NestingTooDeep(d) => write!(f, "try/interrupt depth {d} exceeds {MAX_TRY_DEPTH}"),
            Issue::MissingStatement { section, what } => write!(f, "{section} section lacks `{what}`"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Placements offered by each road template.
pub fn placements_for(road: RoadSpec) -> &'static [PlacementKind] {
    use PlacementKind::*;
    match road {
        RoadSpec::StraightRoad { .. } => &[Ahead, Behind, LeftFront, RightFront, OncomingLane],
        RoadSpec::FourWayIntersection { .. } => &PlacementKind::ALL,
        RoadSpec::TIntersection => &[
            Ahead,
            Behind,
            LeftFront,
            RightFront,
            CrossingFromLeft,
            CrossingFromRight,
        ],
    }
}

/// Ego maneuvers offered by each road template.
pub fn maneuvers_for(road: RoadSpec) -> &'static [Maneuver] {
    match road {
        RoadSpec::StraightRoad { lanes_per_direction: 1 } => &[Maneuver::Straight],
        RoadSpec::StraightRoad { .. } => &[Maneuver::Straight, Maneuver::LaneChange],
        RoadSpec::FourWayIntersection { .. } => &[Maneuver::Straight, Maneuver::LeftTurn, Maneuver::RightTurn],
        RoadSpec::TIntersection => &[Maneuver::LeftTurn, Maneuver::RightTurn],
    }
}

/// Whether a (geometry, spawn) pair can be assembled.
pub fn compatible(geometry: &SnippetAst, spawn: &SnippetAst) -> bool {
    match (geometry.road(), spawn.placement()) {
        (Some(r), Some(p)) => placements_for(r).contains(&p.kind) && maneuvers_for(r).contains(&geometry.maneuver()),
        _ => false,
    }
}

fn merge_params(snippets: [&SnippetAst; 3]) -> Vec<ParamSpec> {
    let mut out: Vec<ParamSpec> = Vec::new();
    for s in snippets {
        for p in &s.params {
            if !out.iter().any(|q| q == p) {
                out.push(p.clone());
            }
        }
    }
    out
}

impl SceneScript {
    /// Combine three snippets without checks; see [`assemble_script`] and [`validate`].
    pub fn from_parts(behavior: SnippetAst, geometry: SnippetAst, spawn: SnippetAst) -> Self {
        let params = merge_params([&behavior, &geometry, &spawn]);
        SceneScript {
            header: Header::default(),
            behavior,
            geometry,
            spawn,
            params,
        }
    }

    pub fn sections(&self) -> [&SnippetAst; 3] {
        [&self.behavior, &self.geometry, &self.spawn]
    }

    pub fn road(&self) -> Option<RoadSpec> {
        self.geometry.road()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Script file text with `## HEADER / ## BEHAVIOR / ## GEOMETRY / ## SPAWN` markers.
    pub fn to_text(&self) -> String {
        format!(
            "## HEADER\n{}## BEHAVIOR\n{}## GEOMETRY\n{}## SPAWN\n{}",
            self.header.render(),
            serialize(&self.behavior),
            serialize(&self.geometry),
            serialize(&self.spawn)
        )
    }

    /// Parse script file text. The result is not validated.
    pub fn from_text(text: &str) -> Result<Self, ScriptError> {
        const MARKERS: [&str; 4] = ["## HEADER", "## BEHAVIOR", "## GEOMETRY", "## SPAWN"];
        let mut sections: [Option<String>; 4] = Default::default();
        let mut current: Option<usize> = None;
        for l in text.lines() {
            if let Some(i) = MARKERS.iter().position(|m| l.trim_end() == *m) {
                sections[i] = Some(String::new());
                current = Some(i);
                continue;
            }
            match current.and_then(|i| sections[i].as_mut()) {
                Some(buf) => {
                    buf.push_str(l);
                    buf.push('\n');
                }
                None if l.trim().is_empty() => {}
                None => return Err(ScriptError::MissingSection(MARKERS[0])),
            }
        }
        let take = |i: usize| sections[i].clone().ok_or(ScriptError::MissingSection(MARKERS[i]));
        let header = Header::parse(&take(0)?)?;
        let parse = |i: usize, kind| {
            parse_snippet(&take(i)?, kind).map_err(|source| ScriptError::Snippet { section: kind, source })
        };
        let mut script = SceneScript::from_parts(
            parse(1, ComponentKind::Behavior)?,
            parse(2, ComponentKind::Geometry)?,
            parse(3, ComponentKind::SpawnPosition)?,
        );
        script.header = header;
        Ok(script)
    }
}

/// Assemble three snippets into a script under the fixed header.
pub fn assemble_script(
    behavior: SnippetAst,
    geometry: SnippetAst,
    spawn: SnippetAst,
) -> Result<SceneScript, AssembleError> {
    for (slot, ast) in ComponentKind::ALL.into_iter().zip([&behavior, &geometry, &spawn]) {
        if ast.kind != slot {
            return Err(AssembleError::KindMismatch {
                slot,
                expected: slot,
                found: ast.kind,
            });
        }
    }
    let script = SceneScript::from_parts(behavior, geometry, spawn);
    for (i, p) in script.params.iter().enumerate() {
        if let Some(q) = script.params[..i].iter().find(|q| q.name == p.name) {
            return Err(AssembleError::ParamConflict {
                name: p.name.clone(),
                a_lo: q.lo,
                a_hi: q.hi,
                b_lo: p.lo,
                b_hi: p.hi,
            });
        }
    }
    if let (Some(r), Some(p)) = (script.geometry.road(), script.spawn.placement()) {
        if !placements_for(r).contains(&p.kind) {
            return Err(AssembleError::IncompatibleGeometry {
                road: road(r),
                placement: p.kind.as_str().to_string(),
            });
        }
        let m = script.geometry.maneuver();
        if !maneuvers_for(r).contains(&m) {
            return Err(AssembleError::UnsupportedManeuver {
                road: road(r),
                maneuver: m.as_str().to_string(),
            });
        }
    }
    Ok(script)
}

/// Check every script invariant; issues come back sorted and deduplicated.
pub fn validate(script: &SceneScript) -> ValidationReport {
    let mut issues = Vec::new();
    for (section, ast) in ComponentKind::ALL.into_iter().zip(script.sections()) {
        if ast.kind != section {
            issues.push(Issue::WrongSection {
                section,
                found: ast.kind,
            });
        }
        let depth = try_depth(&ast.statements);
        if depth > MAX_TRY_DEPTH {
            issues.push(Issue::NestingTooDeep(depth));
        }
    }
    for (i, p) in script.params.iter().enumerate() {
        if !is_param_name(&p.name) {
            issues.push(Issue::InvalidParamName(p.name.clone()));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(p.lo <= p.hi) {
            issues.push(Issue::InvalidRange(p.name.clone()));
        }
        if script.params[..i].iter().any(|q| q.name == p.name) {
            issues.push(Issue::ParamConflict(p.name.clone()));
        }
    }
    for ast in script.sections() {
        for name in ast.referenced_params() {
            if script.param(&name).is_none() {
                issues.push(Issue::UndeclaredParam(name));
            }
        }
    }
    match (script.geometry.road(), script.spawn.placement()) {
        (Some(r), Some(p)) => {
            if !placements_for(r).contains(&p.kind) {
                issues.push(Issue::IncompatibleGeometry {
                    road: road(r),
                    placement: p.kind.as_str().to_string(),
                });
            }
            let m = script.geometry.maneuver();
            if !maneuvers_for(r).contains(&m) {
                issues.push(Issue::UnsupportedManeuver {
                    road: road(r),
                    maneuver: m.as_str().to_string(),
                });
            }
        }
        (r, p) => {
            if r.is_none() {
                issues.push(Issue::MissingStatement {
                    section: ComponentKind::Geometry,
                    what: "road".into(),
                });
            }
            if p.is_none() {
                issues.push(Issue::MissingStatement {
                    section: ComponentKind::SpawnPosition,
                    what: "spawn".into(),
                });
            }
        }
    }
    if script.behavior.behavior_body().is_none() {
        issues.push(Issue::MissingStatement {
            section: ComponentKind::Behavior,
            what: "behavior".into(),
        });
    }
    issues.sort();
    issues.dedup();
    ValidationReport { issues }
}

/// Declared parameters in declaration order.
pub fn list_params(script: &SceneScript) -> Vec<ParamSpec> {
    script.params.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, kind: ComponentKind) -> SnippetAst {
        parse_snippet(text, kind).unwrap()
    }

    fn crossing() -> SnippetAst {
        p(
            "behavior AdvBehavior():\n    do CrossingBehavior(ego, ADV_SPEED, ADV_DISTANCE)\nparam ADV_SPEED = Range(0, 5)\nparam ADV_DISTANCE = Range(0, 20)\n",
            ComponentKind::Behavior,
        )
    }

    fn straight() -> SnippetAst {
        p("road StraightRoad(1)\n", ComponentKind::Geometry)
    }

    fn right_front() -> SnippetAst {
        p(
            "spawn RightFront(SPAWN_DISTANCE)\nparam SPAWN_DISTANCE = Range(15, 30)\n",
            ComponentKind::SpawnPosition,
        )
    }

    #[test]
    fn crossing_on_straight_road_validates() {
        let s = assemble_script(
            crossing(),
            straight(),
            p("spawn RightFront(25)\n", ComponentKind::SpawnPosition),
        )
        .unwrap();
        assert_eq!(
            list_params(&s),
            vec![
                ParamSpec::new("ADV_SPEED", 0.0, 5.0),
                ParamSpec::new("ADV_DISTANCE", 0.0, 20.0)
            ]
        );
        assert!(validate(&s).is_ok(), "{:?}", validate(&s));
        let s = assemble_script(crossing(), straight(), right_front()).unwrap();
        assert_eq!(s.params.len(), 3);
    }

    #[test]
    fn kind_mismatch() {
        let err = assemble_script(crossing(), crossing(), right_front()).unwrap_err();
        assert!(matches!(
            err,
            AssembleError::KindMismatch {
                slot: ComponentKind::Geometry,
                found: ComponentKind::Behavior,
                ..
            }
        ));
    }

    #[test]
    fn identical_duplicates_merge_and_conflicts_fail() {
        let spawn = p(
            "spawn Ahead(ADV_SPEED)\nparam ADV_SPEED = Range(0, 5)\n",
            ComponentKind::SpawnPosition,
        );
        let s = assemble_script(crossing(), straight(), spawn).unwrap();
        assert_eq!(s.params.iter().filter(|q| q.name == "ADV_SPEED").count(), 1);
        let spawn = p(
            "spawn Ahead(ADV_SPEED)\nparam ADV_SPEED = Range(0, 6)\n",
            ComponentKind::SpawnPosition,
        );
        assert!(matches!(
            assemble_script(crossing(), straight(), spawn),
            Err(AssembleError::ParamConflict { .. })
        ));
    }

    #[test]
    fn undeclared_param_is_an_issue() {
        let spawn = p("spawn Ahead(ADV_TRIGGER)\n", ComponentKind::SpawnPosition);
        let s = assemble_script(crossing(), straight(), spawn).unwrap();
        assert_eq!(validate(&s).issues, vec![Issue::UndeclaredParam("ADV_TRIGGER".into())]);
    }

    #[test]
    fn oncoming_on_t_intersection_is_incompatible() {
        let geo = p("road TIntersection()\nroute RightTurn\n", ComponentKind::Geometry);
        let spawn = p("spawn OncomingLane(30)\n", ComponentKind::SpawnPosition);
        assert!(matches!(
            assemble_script(crossing(), geo.clone(), spawn.clone()),
            Err(AssembleError::IncompatibleGeometry { .. })
        ));
        let s = SceneScript::from_parts(crossing(), geo, spawn);
        assert_eq!(
            validate(&s).issues,
            vec![Issue::IncompatibleGeometry {
                road: "TIntersection()".into(),
                placement: "OncomingLane".into()
            }]
        );
    }

    #[test]
    fn text_round_trip() {
        let s = assemble_script(crossing(), straight(), right_front()).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("## HEADER\n"));
        let back = SceneScript::from_text(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn straight_road_has_no_lane_change_with_one_lane() {
        let geo = p("road StraightRoad(1)\nroute LaneChange\n", ComponentKind::Geometry);
        assert!(matches!(
            assemble_script(crossing(), geo, right_front()),
            Err(AssembleError::UnsupportedManeuver { .. })
        ));
    }
}
