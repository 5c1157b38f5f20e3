//! Syntax tree for scene snippets.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The three retrievable sections of a scene script.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Behavior,
    Geometry,
    #[serde(rename = "spawn", alias = "spawn_position")]
    SpawnPosition,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 3] = [
        ComponentKind::Behavior,
        ComponentKind::Geometry,
        ComponentKind::SpawnPosition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Behavior => "behavior",
            ComponentKind::Geometry => "geometry",
            ComponentKind::SpawnPosition => "spawn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "behavior" => Some(ComponentKind::Behavior),
            "geometry" => Some(ComponentKind::Geometry),
            "spawn" | "spawn_position" | "spawnposition" => Some(ComponentKind::SpawnPosition),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A declared scene parameter sampled from `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        ParamSpec {
            name: name.into(),
            lo,
            hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `[A-Z][A-Z0-9_]*`
pub fn is_param_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentClass {
    Car,
    Pedestrian,
    Cyclist,
    Motorcycle,
}

impl AgentClass {
    pub const ALL: [AgentClass; 4] = [
        AgentClass::Car,
        AgentClass::Pedestrian,
        AgentClass::Cyclist,
        AgentClass::Motorcycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentClass::Car => "Car",
            AgentClass::Pedestrian => "Pedestrian",
            AgentClass::Cyclist => "Cyclist",
            AgentClass::Motorcycle => "Motorcycle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        AgentClass::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Footprint radius in meters.
    pub fn radius(self) -> f64 {
        match self {
            AgentClass::Car => 1.2,
            AgentClass::Pedestrian => 0.4,
            AgentClass::Cyclist | AgentClass::Motorcycle => 0.6,
        }
    }

    /// Vulnerable road users may stand off the carriageway.
    pub fn may_leave_road(self) -> bool {
        matches!(self, AgentClass::Pedestrian | AgentClass::Cyclist)
    }
}

/// Argument or operand value.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    Bool(bool),
    /// `NAME`, or `globalParameters.NAME` when `qualified`.
    Param {
        name: String,
        qualified: bool,
    },
    Ego,
    SelfRef,
}

impl Expr {
    pub fn param(name: &str) -> Self {
        Expr::Param {
            name: name.to_string(),
            qualified: false,
        }
    }

    pub fn param_name(&self) -> Option<&str> {
        match self {
            Expr::Param { name, .. } => Some(name),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arg {
    pub keyword: Option<String>,
    pub value: Expr,
}

impl Arg {
    pub fn positional(value: Expr) -> Self {
        Arg { keyword: None, value }
    }
}

/// Built-in adversary behaviors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    /// `(ego, speed, trigger_distance)`
    Crossing,
    /// `(target_speed)`
    FollowLane,
    /// `(target_speed)`
    LaneChange,
    /// `()`
    Stop,
    /// `(target, rate)`
    Accelerate,
    /// `(decel)`
    Brake,
}

impl Primitive {
    pub const ALL: [Primitive; 6] = [
        Primitive::Crossing,
        Primitive::FollowLane,
        Primitive::LaneChange,
        Primitive::Stop,
        Primitive::Accelerate,
        Primitive::Brake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Crossing => "CrossingBehavior",
            Primitive::FollowLane => "FollowLaneBehavior",
            Primitive::LaneChange => "LaneChangeBehavior",
            Primitive::Stop => "StopBehavior",
            Primitive::Accelerate => "AccelerateBehavior",
            Primitive::Brake => "BrakeBehavior",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Primitive::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Formal parameter names, in positional order.
    pub fn formals(self) -> &'static [&'static str] {
        match self {
            Primitive::Crossing => &["target", "speed", "trigger_distance"],
            Primitive::FollowLane | Primitive::LaneChange => &["target_speed"],
            Primitive::Stop => &[],
            Primitive::Accelerate => &["target", "rate"],
            Primitive::Brake => &["decel"],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorCall {
    pub primitive: Primitive,
    pub args: Vec<Arg>,
}

impl BehaviorCall {
    /// Resolve a formal parameter to the expression bound to it.
    pub fn arg(&self, formal: &str) -> Option<&Expr> {
        let pos = self.primitive.formals().iter().position(|f| *f == formal)?;
        self.args
            .iter()
            .find(|a| a.keyword.as_deref() == Some(formal))
            .or_else(|| self.args.iter().filter(|a| a.keyword.is_none()).nth(pos))
            .map(|a| &a.value)
    }
}

/// Built-in interrupt predicates, optionally combined with `and` / `not`.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    /// `withinDistanceToAnyCars(self, d)`
    WithinDistanceToAnyCars(Expr),
    /// `inSameLaneAsEgo(self)`
    InSameLaneAsEgo,
    /// `distanceToEgoLane(self) < d`
    DistanceToEgoLaneBelow(Expr),
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
}

impl Condition {
    pub fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Condition::WithinDistanceToAnyCars(e) | Condition::DistanceToEgoLaneBelow(e) => f(e),
            Condition::InSameLaneAsEgo => {}
            Condition::Not(c) => c.visit_exprs(f),
            Condition::And(a, b) => {
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedAction {
    /// `SetSpeedAction`
    Vehicle,
    /// `SetWalkingSpeedAction`
    Walking,
}

impl SpeedAction {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeedAction::Vehicle => "SetSpeedAction",
            SpeedAction::Walking => "SetWalkingSpeedAction",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "SetSpeedAction" => Some(SpeedAction::Vehicle),
            "SetWalkingSpeedAction" => Some(SpeedAction::Walking),
            _ => None,
        }
    }
}

/// Road templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoadSpec {
    StraightRoad { lanes_per_direction: u32 },
    FourWayIntersection { signalized: bool },
    TIntersection,
}

impl RoadSpec {
    pub fn name(self) -> &'static str {
        match self {
            RoadSpec::StraightRoad { .. } => "StraightRoad",
            RoadSpec::FourWayIntersection { .. } => "FourWayIntersection",
            RoadSpec::TIntersection => "TIntersection",
        }
    }
}

/// Ego maneuver selecting a route family on the road template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Maneuver {
    Straight,
    LeftTurn,
    RightTurn,
    LaneChange,
}

impl Maneuver {
    pub const ALL: [Maneuver; 4] = [
        Maneuver::Straight,
        Maneuver::LeftTurn,
        Maneuver::RightTurn,
        Maneuver::LaneChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::Straight => "Straight",
            Maneuver::LeftTurn => "LeftTurn",
            Maneuver::RightTurn => "RightTurn",
            Maneuver::LaneChange => "LaneChange",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Maneuver::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Adversary placement relative to the ego spawn pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementKind {
    Ahead,
    Behind,
    LeftFront,
    RightFront,
    OncomingLane,
    CrossingFromLeft,
    CrossingFromRight,
}

impl PlacementKind {
    pub const ALL: [PlacementKind; 7] = [
        PlacementKind::Ahead,
        PlacementKind::Behind,
        PlacementKind::LeftFront,
        PlacementKind::RightFront,
        PlacementKind::OncomingLane,
        PlacementKind::CrossingFromLeft,
        PlacementKind::CrossingFromRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlacementKind::Ahead => "Ahead",
            PlacementKind::Behind => "Behind",
            PlacementKind::LeftFront => "LeftFront",
            PlacementKind::RightFront => "RightFront",
            PlacementKind::OncomingLane => "OncomingLane",
            PlacementKind::CrossingFromLeft => "CrossingFromLeft",
            PlacementKind::CrossingFromRight => "CrossingFromRight",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        PlacementKind::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub kind: PlacementKind,
    pub distance: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    /// `agent Pedestrian`
    Agent(AgentClass),
    /// `behavior Name():` followed by an indented body.
    Behavior { name: String, body: Vec<Statement> },
    /// `do Primitive(args)`
    DoBehavior(BehaviorCall),
    /// `try:` body, `interrupt when cond:` handler.
    TryInterrupt {
        body: Vec<Statement>,
        condition: Condition,
        handler: Vec<Statement>,
    },
    /// `take SetSpeedAction(v)`
    SetSpeed { action: SpeedAction, value: Expr },
    /// `while True:`
    Loop(Vec<Statement>),
    /// `param NAME = Range(lo, hi)`
    ParamDecl(ParamSpec),
    /// `road Template(args)`
    Road(RoadSpec),
    /// `route Maneuver`
    Route(Maneuver),
    /// `spawn Placement(d)`
    Spawn(Placement),
}

/// Parsed snippet for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct SnippetAst {
    pub kind: ComponentKind,
    /// Top-level statements in source order.
    pub statements: Vec<Statement>,
    /// Declared parameters in declaration order.
    pub params: Vec<ParamSpec>,
}

impl SnippetAst {
    /// Builds the AST, deriving `params` from the top-level declarations.
    pub fn new(kind: ComponentKind, statements: Vec<Statement>) -> Self {
        let params = statements
            .iter()
            .filter_map(|s| match s {
                Statement::ParamDecl(p) => Some(p.clone()),
                _ => None,
            })
            .collect();
        SnippetAst {
            kind,
            statements,
            params,
        }
    }

    /// Parameter names referenced by statements (not declarations), first-use order.
    pub fn referenced_params(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |e: &Expr| {
            if let Some(n) = e.param_name() {
                if !out.iter().any(|o| o == n) {
                    out.push(n.to_string());
                }
            }
        };
        visit_statement_exprs(&self.statements, &mut push);
        out
    }

    pub fn behavior_body(&self) -> Option<&[Statement]> {
        self.statements.iter().find_map(|s| match s {
            Statement::Behavior { body, .. } => Some(body.as_slice()),
            _ => None,
        })
    }

    /// Declared agent class, else inferred: crossing walkers are pedestrians, everything else a car.
    pub fn agent_class(&self) -> AgentClass {
        if let Some(c) = self.statements.iter().find_map(|s| match s {
            Statement::Agent(c) => Some(*c),
            _ => None,
        }) {
            return c;
        }
        let mut walking = false;
        visit_statements(&self.statements, &mut |s| match s {
            Statement::DoBehavior(call) if call.primitive == Primitive::Crossing => walking = true,
            Statement::SetSpeed {
                action: SpeedAction::Walking,
                ..
            } => walking = true,
            _ => {}
        });
        if walking {
            AgentClass::Pedestrian
        } else {
            AgentClass::Car
        }
    }

    pub fn road(&self) -> Option<RoadSpec> {
        self.statements.iter().find_map(|s| match s {
            Statement::Road(r) => Some(*r),
            _ => None,
        })
    }

    /// Ego maneuver; `Straight` when the geometry snippet does not say.
    pub fn maneuver(&self) -> Maneuver {
        self.statements
            .iter()
            .find_map(|s| match s {
                Statement::Route(m) => Some(*m),
                _ => None,
            })
            .unwrap_or(Maneuver::Straight)
    }

    pub fn placement(&self) -> Option<&Placement> {
        self.statements.iter().find_map(|s| match s {
            Statement::Spawn(p) => Some(p),
            _ => None,
        })
    }
}

/// Depth-first visit of every statement, including nested bodies.
pub fn visit_statements<'a>(stmts: &'a [Statement], f: &mut impl FnMut(&'a Statement)) {
    for s in stmts {
        f(s);
        match s {
            Statement::Behavior { body, .. } | Statement::Loop(body) => visit_statements(body, f),
            Statement::TryInterrupt { body, handler, .. } => {
                visit_statements(body, f);
                visit_statements(handler, f);
            }
            _ => {}
        }
    }
}

fn visit_statement_exprs<'a>(stmts: &'a [Statement], f: &mut impl FnMut(&'a Expr)) {
    visit_statements(stmts, &mut |s| match s {
        Statement::DoBehavior(call) => call.args.iter().for_each(|a| f(&a.value)),
        Statement::TryInterrupt { condition, .. } => condition.visit_exprs(f),
        Statement::SetSpeed { value, .. } => f(value),
        Statement::Spawn(p) => f(&p.distance),
        _ => {}
    });
}

/// Maximum nesting depth of `try`/`interrupt` blocks.
pub fn try_depth(stmts: &[Statement]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Statement::Behavior { body, .. } | Statement::Loop(body) => try_depth(body),
            Statement::TryInterrupt { body, handler, .. } => 1 + try_depth(body).max(try_depth(handler)),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}
