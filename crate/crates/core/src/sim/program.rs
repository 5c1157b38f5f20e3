//! Stepwise interpreter for adversary behavior programs.

use super::geom::{wrap_angle, Line, Vec2};
use super::SimError;
use crate::dsl::{BehaviorCall, Condition, Expr, Primitive, Statement};
use crate::sampler::ParamAssignment;

/// Instantaneous statements executed per tick before the tick is forced to end.
pub const TICK_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrimCall {
    Crossing { speed: f64, trigger: f64 },
    FollowLane { speed: f64 },
    LaneChange { speed: f64 },
    Stop,
    Accelerate { target: f64, rate: f64 },
    Brake { decel: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cond {
    NearCar(f64),
    SameLane,
    EgoLaneBelow(f64),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Do(PrimCall),
    Take(f64),
    Loop(Vec<Node>),
    Try {
        body: Vec<Node>,
        cond: Cond,
        handler: Vec<Node>,
    },
}

/// Compiled behavior with every parameter resolved to a number.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub nodes: Vec<Node>,
}

fn number(e: &Expr, params: &ParamAssignment, what: &str) -> Result<f64, SimError> {
    let v = match e {
        Expr::Number(v) => *v,
        Expr::Param { name, .. } => params.get(name).ok_or_else(|| SimError::MissingParam(name.clone()))?,
        _ => return Err(SimError::BadArgument(what.to_string())),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SimError::NonFinite(what.to_string()))
    }
}

fn arg(call: &BehaviorCall, formal: &str, params: &ParamAssignment) -> Result<f64, SimError> {
    let what = format!("{}.{formal}", call.primitive.as_str());
    let e = call.arg(formal).ok_or_else(|| SimError::BadArgument(what.clone()))?;
    number(e, params, &what)
}

fn compile_call(call: &BehaviorCall, p: &ParamAssignment) -> Result<PrimCall, SimError> {
    Ok(match call.primitive {
        Primitive::Crossing => PrimCall::Crossing {
            speed: arg(call, "speed", p)?,
            trigger: arg(call, "trigger_distance", p)?,
        },
        Primitive::FollowLane => PrimCall::FollowLane {
            speed: arg(call, "target_speed", p)?,
        },
        Primitive::LaneChange => PrimCall::LaneChange {
            speed: arg(call, "target_speed", p)?,
        },
        Primitive::Stop => PrimCall::Stop,
        Primitive::Accelerate => PrimCall::Accelerate {
            target: arg(call, "target", p)?,
            rate: arg(call, "rate", p)?,
        },
        Primitive::Brake => PrimCall::Brake {
            decel: arg(call, "decel", p)?,
        },
    })
}

fn compile_cond(c: &Condition, p: &ParamAssignment) -> Result<Cond, SimError> {
    Ok(match c {
        Condition::WithinDistanceToAnyCars(e) => Cond::NearCar(number(e, p, "withinDistanceToAnyCars")?),
        Condition::InSameLaneAsEgo => Cond::SameLane,
        Condition::DistanceToEgoLaneBelow(e) => Cond::EgoLaneBelow(number(e, p, "distanceToEgoLane")?),
        Condition::Not(c) => Cond::Not(Box::new(compile_cond(c, p)?)),
        Condition::And(a, b) => Cond::And(Box::new(compile_cond(a, p)?), Box::new(compile_cond(b, p)?)),
    })
}

fn compile_block(stmts: &[Statement], p: &ParamAssignment) -> Result<Vec<Node>, SimError> {
    let mut out = Vec::new();
    for s in stmts {
        match s {
            Statement::DoBehavior(call) => out.push(Node::Do(compile_call(call, p)?)),
            Statement::SetSpeed { value, .. } => out.push(Node::Take(number(value, p, "take")?)),
            Statement::Loop(body) => out.push(Node::Loop(compile_block(body, p)?)),
            Statement::TryInterrupt {
                body,
                condition,
                handler,
            } => out.push(Node::Try {
                body: compile_block(body, p)?,
                cond: compile_cond(condition, p)?,
                handler: compile_block(handler, p)?,
            }),
            Statement::Behavior { body, .. } => out.extend(compile_block(body, p)?),
            _ => {}
        }
    }
    Ok(out)
}

impl Program {
    /// Compile a behavior snippet's statements against a parameter assignment.
    pub fn compile(stmts: &[Statement], params: &ParamAssignment) -> Result<Self, SimError> {
        Ok(Program {
            nodes: compile_block(stmts, params)?,
        })
    }
}

/// Steering intent of an adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Steer {
    Keep,
    Line(Line),
    Heading(f64),
}

/// Motion command held until a primitive replaces it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command {
    pub target_speed: f64,
    /// Acceleration magnitude bound tighter than the class limit.
    pub rate: Option<f64>,
    pub steer: Steer,
}

/// Read-only view of the scene from one adversary.
pub struct Ctx<'a> {
    pub pos: Vec2,
    pub yaw: f64,
    pub v: f64,
    pub ego_pos: Vec2,
    pub ego_lane: Line,
    /// Centers of the ego and every other non-walking agent.
    pub vehicles: &'a [Vec2],
    pub lane_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum PrimState {
    Fresh,
    /// Crossing direction and reference line once triggered.
    Crossing(Option<(Vec2, Line)>),
    LaneChange(Line),
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Cursor {
    pc: usize,
    child: Child,
}

#[derive(Clone, Debug, Default, PartialEq)]
enum Child {
    #[default]
    None,
    Prim(PrimState),
    Loop(Box<Cursor>),
    Try(Box<TryCursor>),
}

#[derive(Clone, Debug, Default, PartialEq)]
struct TryCursor {
    body: Cursor,
    handler: Option<Cursor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Running,
    Done,
}

/// Execution state of one adversary's program.
#[derive(Clone, Debug, PartialEq)]
pub struct Runtime {
    cursor: Cursor,
    pub cmd: Command,
    /// Line the agent treats as its own lane.
    pub home: Line,
    pub finished: bool,
}

impl Runtime {
    pub fn new(home: Line, steer_home: bool) -> Self {
        Runtime {
            cursor: Cursor::default(),
            cmd: Command {
                target_speed: 0.0,
                rate: None,
                steer: if steer_home { Steer::Line(home) } else { Steer::Keep },
            },
            home,
            finished: false,
        }
    }

    /// Advance the program by one tick; the resulting command is in `self.cmd`.
    pub fn tick(&mut self, program: &Program, ctx: &Ctx) {
        if self.finished {
            return;
        }
        let mut budget = TICK_BUDGET;
        let mut m = Machine {
            ctx,
            cmd: &mut self.cmd,
            home: &mut self.home,
            budget: &mut budget,
        };
        if m.seq(&program.nodes, &mut self.cursor) == Status::Done {
            self.finished = true;
        }
    }
}

struct Machine<'a, 'c> {
    ctx: &'a Ctx<'c>,
    cmd: &'a mut Command,
    home: &'a mut Line,
    budget: &'a mut usize,
}

impl Machine<'_, '_> {
    fn spend(&mut self) -> bool {
        *self.budget = self.budget.saturating_sub(1);
        *self.budget == 0
    }

    fn seq(&mut self, nodes: &[Node], cur: &mut Cursor) -> Status {
        while cur.pc < nodes.len() {
            match &nodes[cur.pc] {
                Node::Do(call) => {
                    if !matches!(cur.child, Child::Prim(_)) {
                        cur.child = Child::Prim(PrimState::Fresh);
                    }
                    let Child::Prim(st) = &mut cur.child else {
                        unreachable!()
                    };
                    if self.prim(*call, st) == Status::Running {
                        return Status::Running;
                    }
                }
                Node::Take(v) => {
                    self.cmd.target_speed = v.max(0.0);
                    self.cmd.rate = None;
                }
                Node::Loop(body) => {
                    if !matches!(cur.child, Child::Loop(_)) {
                        cur.child = Child::Loop(Box::default());
                    }
                    let Child::Loop(inner) = &mut cur.child else {
                        unreachable!()
                    };
                    loop {
                        if self.seq(body, inner) == Status::Running {
                            return Status::Running;
                        }
                        **inner = Cursor::default();
                        if self.spend() {
                            return Status::Running;
                        }
                    }
                }
                Node::Try { body, cond, handler } => {
                    if !matches!(cur.child, Child::Try(_)) {
                        cur.child = Child::Try(Box::default());
                    }
                    let Child::Try(tc) = &mut cur.child else { unreachable!() };
                    if tc.handler.is_none() && self.eval(cond) {
                        tc.handler = Some(Cursor::default());
                    }
                    if let Some(h) = tc.handler.as_mut() {
                        if self.seq(handler, h) == Status::Done {
                            tc.handler = None;
                        }
                        return Status::Running;
                    }
                    if self.seq(body, &mut tc.body) == Status::Running {
                        return Status::Running;
                    }
                }
            }
            cur.pc += 1;
            cur.child = Child::None;
            if self.spend() {
                return Status::Running;
            }
        }
        Status::Done
    }

    fn eval(&self, c: &Cond) -> bool {
        let ctx = self.ctx;
        match c {
            Cond::NearCar(d) => ctx.vehicles.iter().any(|p| p.dist(ctx.pos) < *d),
            Cond::SameLane => ctx.ego_lane.lateral(ctx.pos).abs() < ctx.lane_width / 2.0,
            Cond::EgoLaneBelow(d) => ctx.ego_lane.lateral(ctx.pos).abs() < *d,
            Cond::Not(c) => !self.eval(c),
            Cond::And(a, b) => self.eval(a) && self.eval(b),
        }
    }

    fn prim(&mut self, call: PrimCall, st: &mut PrimState) -> Status {
        let ctx = self.ctx;
        let stopped = ctx.v <= 1e-9;
        match call {
            PrimCall::Crossing { speed, trigger } => {
                if *st == PrimState::Fresh {
                    *st = PrimState::Crossing(None);
                }
                let PrimState::Crossing(dir) = st else { unreachable!() };
                if dir.is_none() {
                    if ctx.pos.dist(ctx.ego_pos) >= trigger {
                        self.cmd.target_speed = 0.0;
                        self.cmd.rate = None;
                        return Status::Running;
                    }
                    let line = ctx.ego_lane;
                    let n = line.dir.left();
                    let d = if line.lateral(ctx.pos) > 0.0 { n * -1.0 } else { n };
                    *dir = Some((d, line));
                }
                let (d, line) = dir.unwrap();
                *self.cmd = Command {
                    target_speed: speed.max(0.0),
                    rate: None,
                    steer: Steer::Heading(d.angle()),
                };
                let past = line.dir.left().dot(d) * line.lateral(ctx.pos);
                if past > ctx.lane_width + 1.5 {
                    Status::Done
                } else {
                    Status::Running
                }
            }
            PrimCall::FollowLane { speed } => {
                *self.cmd = Command {
                    target_speed: speed.max(0.0),
                    rate: None,
                    steer: Steer::Line(*self.home),
                };
                Status::Running
            }
            PrimCall::LaneChange { speed } => {
                if *st == PrimState::Fresh {
                    *st = PrimState::LaneChange(self.lane_change_target());
                }
                let PrimState::LaneChange(target) = st else {
                    unreachable!()
                };
                let target = *target;
                *self.cmd = Command {
                    target_speed: speed.max(0.0),
                    rate: None,
                    steer: Steer::Line(target),
                };
                let heading_err = wrap_angle(ctx.yaw - target.dir.angle()).abs();
                if target.lateral(ctx.pos).abs() < 0.15 && heading_err < 0.05 {
                    *self.home = target;
                    Status::Done
                } else {
                    Status::Running
                }
            }
            PrimCall::Stop => {
                self.cmd.target_speed = 0.0;
                self.cmd.rate = None;
                if stopped {
                    Status::Done
                } else {
                    Status::Running
                }
            }
            PrimCall::Brake { decel } => {
                self.cmd.target_speed = 0.0;
                self.cmd.rate = Some(decel.max(0.0));
                if stopped {
                    Status::Done
                } else {
                    Status::Running
                }
            }
            PrimCall::Accelerate { target, rate } => {
                self.cmd.target_speed = target.max(0.0);
                self.cmd.rate = Some(rate.max(0.0));
                if (ctx.v - target.max(0.0)).abs() < 1e-6 {
                    Status::Done
                } else {
                    Status::Running
                }
            }
        }
    }

    /// Into the ego lane when outside it, otherwise out of it.
    fn lane_change_target(&self) -> Line {
        let ctx = self.ctx;
        let w = ctx.lane_width;
        let lane = ctx.ego_lane;
        let fwd = Vec2::from_angle(ctx.yaw);
        let dir = if fwd.dot(lane.dir) >= 0.0 {
            lane.dir
        } else {
            lane.dir * -1.0
        };
        if lane.lateral(ctx.pos).abs() >= w / 2.0 {
            return Line {
                origin: lane.origin,
                dir,
            };
        }
        let home = *self.home;
        if lane.lateral(home.origin).abs() >= w / 2.0 {
            home
        } else {
            home.shifted(w)
        }
    }
}
