//! Deterministic fixed-step 2D kinematic traffic simulator.
//!
//! [`build_scene`] instantiates a [`SceneScript`] with a parameter assignment on
//! a road template and ego route; [`run`] steps it against a [`Driver`] and
//! returns a [`SceneTrace`]. Agents are discs; vehicles track lane lines with a
//! bounded yaw rate, walkers turn in place.

pub mod geom;
pub mod program;
pub mod road;
pub mod trace;

use thiserror::Error;

use crate::dsl::{AgentClass, Maneuver, PlacementKind, SceneScript};
use crate::sampler::ParamAssignment;
use geom::{wrap_angle, Line, Pose, Vec2};
use program::{Ctx, Program, Runtime, Steer};
use road::{ego_signal_phase, RoadTemplate, Route, SignalPhase, TrafficControl};

pub use trace::{replay, AgentInfo, AgentState, Frame, ReplayReport, SceneTrace, TraceHeader, TRACE_SCHEMA_VERSION};

/// Ego actuation bounds.
pub const EGO_ACCEL_MIN: f64 = -6.0;
pub const EGO_ACCEL_MAX: f64 = 3.0;
pub const EGO_YAW_RATE_MAX: f64 = 0.6;
/// Route completion threshold on the progress fraction.
pub const COMPLETION: f64 = 0.999;
/// A stop counts when speed drops below this within [`STOP_ZONE`] before the stop line.
pub const STOP_SPEED: f64 = 0.1;
pub const STOP_ZONE: f64 = 10.0;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("route {route} out of range: template offers {available}")]
    RouteOutOfRange { route: usize, available: usize },
    #[error("maneuver {0:?} not offered by the road template")]
    UnsupportedManeuver(Maneuver),
    #[error("script has no road template")]
    MissingRoad,
    #[error("script has no spawn placement")]
    MissingPlacement,
    #[error("placement {kind:?}({distance}) falls outside the road template")]
    Placement { kind: PlacementKind, distance: f64 },
    #[error("parameter `{0}` has no assigned value")]
    MissingParam(String),
    #[error("bad argument for {0}")]
    BadArgument(String),
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error("replay: {0}")]
    Replay(String),
}

/// Ego actuation command.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Control {
    /// Longitudinal acceleration, m/s².
    pub accel: f64,
    /// Yaw-rate command, rad/s.
    pub yaw_rate: f64,
}

impl Control {
    pub fn clamped(self) -> Control {
        let c = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Control {
            accel: c(self.accel, EGO_ACCEL_MIN, EGO_ACCEL_MAX),
            yaw_rate: c(self.yaw_rate, -EGO_YAW_RATE_MAX, EGO_YAW_RATE_MAX),
        }
    }

    pub fn within_bounds(&self) -> bool {
        (EGO_ACCEL_MIN..=EGO_ACCEL_MAX).contains(&self.accel) && self.yaw_rate.abs() <= EGO_YAW_RATE_MAX
    }
}

/// What the ego controller sees each step.
#[derive(Clone, Debug)]
pub struct SceneView<'a> {
    pub ego: AgentState,
    pub ego_radius: f64,
    /// Center and radius of every other agent.
    pub others: Vec<(Vec2, f64)>,
    pub route: &'a Route,
    /// Ego arc length along the route.
    pub s: f64,
}

/// Ego controller.
pub trait Driver: Sync {
    fn control(&self, view: &SceneView) -> Control;

    fn initial_speed(&self) -> f64 {
        0.0
    }

    /// Serializable description used to rebuild the driver on replay.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Static description of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub class: AgentClass,
    pub pose: Pose,
}

/// Fully instantiated scene.
#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub script: SceneScript,
    pub template: RoadTemplate,
    pub route: Route,
    pub assignment: ParamAssignment,
    /// Ego first, then adversaries.
    pub agents: Vec<AgentSpec>,
    /// One program per adversary.
    pub programs: Vec<Program>,
    pub dt: f64,
    pub max_steps: u32,
}

impl SceneConfig {
    pub fn lane_width(&self) -> f64 {
        self.template.lane_width
    }
}

pub fn accel_limit(class: AgentClass) -> f64 {
    match class {
        AgentClass::Car | AgentClass::Motorcycle => 6.0,
        AgentClass::Cyclist => 4.0,
        AgentClass::Pedestrian => 8.0,
    }
}

/// Yaw-rate bound for lane-tracking agents; `None` for walkers, which turn in place.
pub fn yaw_rate_limit(class: AgentClass) -> Option<f64> {
    match class {
        AgentClass::Car => Some(0.8),
        AgentClass::Motorcycle | AgentClass::Cyclist => Some(1.0),
        AgentClass::Pedestrian => None,
    }
}

fn is_vehicle(class: AgentClass) -> bool {
    class != AgentClass::Pedestrian
}

/// Adversary spawn pose for `kind` at distance `d`, relative to the ego start pose.
pub fn resolve_placement(
    template: &RoadTemplate,
    ego: Pose,
    kind: PlacementKind,
    d: f64,
    class: AgentClass,
) -> Result<Pose, SimError> {
    let w = template.lane_width;
    let f = ego.fwd();
    let n = f.left();
    let p = ego.pos();
    let yaw = ego.yaw;
    let walker = class.may_leave_road();
    let (left_edge, right_edge) = template.edge_offsets();
    let err = || SimError::Placement { kind, distance: d };
    let pose = match kind {
        PlacementKind::Ahead => Pose::new(p + f * d, yaw),
        PlacementKind::Behind => Pose::new(p - f * d, yaw),
        PlacementKind::LeftFront if walker => {
            Pose::new(p + f * d + n * (left_edge + 1.5), yaw - std::f64::consts::FRAC_PI_2)
        }
        PlacementKind::LeftFront => Pose::new(p + f * d + n * w, yaw),
        PlacementKind::RightFront if walker => {
            Pose::new(p + f * d - n * (right_edge + 1.5), yaw + std::f64::consts::FRAC_PI_2)
        }
        PlacementKind::RightFront => {
            let off = if template.lanes_per_direction >= 2 {
                w
            } else {
                w / 2.0 + 1.0
            };
            Pose::new(p + f * d - n * off, yaw)
        }
        PlacementKind::OncomingLane => Pose::new(p + f * d + n * w, wrap_angle(yaw + std::f64::consts::PI)),
        PlacementKind::CrossingFromLeft | PlacementKind::CrossingFromRight => {
            if template.junction.is_none() {
                return Err(err());
            }
            let c = Vec2::new(0.0, 0.0);
            if kind == PlacementKind::CrossingFromLeft {
                Pose::new(c + n * d - f * (w / 2.0), wrap_angle(yaw - std::f64::consts::FRAC_PI_2))
            } else {
                Pose::new(c - n * d + f * (w / 2.0), wrap_angle(yaw + std::f64::consts::FRAC_PI_2))
            }
        }
    };
    if !d.is_finite() || !template.within_extent(pose.pos(), 2.0) {
        return Err(err());
    }
    Ok(Pose::new(pose.pos(), wrap_angle(pose.yaw)))
}

/// Instantiate `script` with `assignment` on ego route `route_id`.
pub fn build_scene(
    script: &SceneScript,
    assignment: &ParamAssignment,
    route_id: usize,
) -> Result<SceneConfig, SimError> {
    for p in &script.params {
        match assignment.get(&p.name) {
            None => return Err(SimError::MissingParam(p.name.clone())),
            Some(v) if !v.is_finite() => return Err(SimError::NonFinite(p.name.clone())),
            _ => {}
        }
    }
    let spec = script.road().ok_or(SimError::MissingRoad)?;
    let template = RoadTemplate::new(spec, script.header.lane_width);
    let route = template.route(script.geometry.maneuver(), route_id)?;
    let placement = script.spawn.placement().ok_or(SimError::MissingPlacement)?;
    let d = match &placement.distance {
        crate::dsl::Expr::Number(v) => *v,
        crate::dsl::Expr::Param { name, .. } => assignment
            .get(name)
            .ok_or_else(|| SimError::MissingParam(name.clone()))?,
        _ => return Err(SimError::BadArgument("spawn distance".into())),
    };
    let class = script.behavior.agent_class();
    let ego_pose = route.start_pose();
    let adv_pose = resolve_placement(&template, ego_pose, placement.kind, d, class)?;
    let body = script.behavior.behavior_body().unwrap_or(&script.behavior.statements);
    let program = Program::compile(body, assignment)?;
    Ok(SceneConfig {
        template,
        route,
        assignment: assignment.clone(),
        agents: vec![
            AgentSpec {
                id: "ego".into(),
                class: AgentClass::Car,
                pose: ego_pose,
            },
            AgentSpec {
                id: "adv0".into(),
                class,
                pose: adv_pose,
            },
        ],
        programs: vec![program],
        dt: script.header.dt,
        max_steps: script.header.max_steps,
        script: script.clone(),
    })
}

/// Mutable simulation state.
#[derive(Clone, Debug)]
pub struct SceneState {
    pub step: u32,
    pub agents: Vec<AgentState>,
    runtimes: Vec<Runtime>,
    /// Current ego arc length along the route.
    pub s: f64,
    pub progress: f64,
    stopped_at_line: bool,
    pub finished: bool,
}

impl SceneState {
    pub fn new(config: &SceneConfig, driver: &dyn Driver) -> Self {
        let agents = config
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentState {
                x: a.pose.x,
                y: a.pose.y,
                yaw: a.pose.yaw,
                v: if i == 0 { driver.initial_speed().max(0.0) } else { 0.0 },
                a: 0.0,
                w: 0.0,
            })
            .collect();
        let runtimes = config.agents[1..]
            .iter()
            .map(|a| Runtime::new(Line::from_pose(&a.pose), is_vehicle(a.class)))
            .collect();
        SceneState {
            step: 0,
            agents,
            runtimes,
            s: 0.0,
            progress: 0.0,
            stopped_at_line: false,
            finished: false,
        }
    }

    pub fn view<'a>(&self, config: &'a SceneConfig) -> SceneView<'a> {
        SceneView {
            ego: self.agents[0],
            ego_radius: config.agents[0].class.radius(),
            others: self.agents[1..]
                .iter()
                .zip(&config.agents[1..])
                .map(|(s, a)| (s.pos(), a.class.radius()))
                .collect(),
            route: &config.route,
            s: self.s,
        }
    }
}

fn ego_lane(route: &Route, s: f64) -> Line {
    Line {
        origin: route.path.point_at(s),
        dir: Vec2::from_angle(route.path.heading_at(s)),
    }
}

fn integrate(st: &AgentState, accel: f64, yaw_rate: f64, dt: f64) -> AgentState {
    let v = (st.v + accel * dt).max(0.0);
    let yaw = wrap_angle(st.yaw + yaw_rate * dt);
    let p = st.pos() + Vec2::from_angle(yaw) * (v * dt);
    AgentState {
        x: p.x,
        y: p.y,
        yaw,
        v,
        a: (v - st.v) / dt,
        w: yaw_rate,
    }
}

fn adversary_update(st: &AgentState, class: AgentClass, rt: &Runtime, dt: f64) -> AgentState {
    let cmd = rt.cmd;
    let limit = accel_limit(class);
    let rate = cmd.rate.map_or(limit, |r| r.min(limit));
    let accel = ((cmd.target_speed - st.v) / dt).clamp(-rate, rate);
    let desired = match cmd.steer {
        Steer::Keep => st.yaw,
        Steer::Heading(h) => h,
        Steer::Line(l) => {
            let e = l.lateral(st.pos());
            l.dir.angle() + (-(0.25 * e).atan()).clamp(-0.4, 0.4)
        }
    };
    let err = wrap_angle(desired - st.yaw);
    match yaw_rate_limit(class) {
        Some(max) => {
            let v_next = (st.v + accel * dt).max(0.0);
            let bound = max.min(v_next / 4.0);
            integrate(st, accel, (4.0 * err).clamp(-bound, bound), dt)
        }
        None => integrate(st, accel, err / dt, dt),
    }
}

/// Advance one step and return the recorded frame.
pub fn step(config: &SceneConfig, state: &mut SceneState, driver: &dyn Driver) -> Frame {
    let dt = config.dt;
    let w = config.lane_width();
    let route = &config.route;
    let lane = ego_lane(route, state.s);
    let ego = state.agents[0];

    let control = driver.control(&state.view(config)).clamped();
    let mut next = Vec::with_capacity(state.agents.len());
    next.push(integrate(&ego, control.accel, control.yaw_rate, dt));

    for (k, rt) in state.runtimes.iter_mut().enumerate() {
        let i = k + 1;
        let me = state.agents[i];
        let vehicles: Vec<Vec2> = state
            .agents
            .iter()
            .zip(&config.agents)
            .enumerate()
            .filter(|(j, (_, a))| *j != i && (*j == 0 || is_vehicle(a.class)))
            .map(|(_, (s, _))| s.pos())
            .collect();
        let ctx = Ctx {
            pos: me.pos(),
            yaw: me.yaw,
            v: me.v,
            ego_pos: ego.pos(),
            ego_lane: lane,
            vehicles: &vehicles,
            lane_width: w,
        };
        rt.tick(&config.programs[k], &ctx);
        next.push(adversary_update(&me, config.agents[i].class, rt, dt));
    }
    for a in &next {
        assert!(
            [a.x, a.y, a.yaw, a.v, a.a, a.w].iter().all(|v| v.is_finite()),
            "non-finite agent state at step {}",
            state.step + 1
        );
    }

    let s_prev = state.s;
    let ego_next = next[0];
    let proj = route.path.project_window(ego_next.pos(), s_prev - 10.0, s_prev + 15.0);
    state.s = proj.s;
    state.progress = state.progress.max((proj.s / route.length()).min(1.0));

    let mut red = false;
    let mut stop_sign = false;
    if let Some(line) = route.stop_line_s {
        if (line - STOP_ZONE..=line).contains(&proj.s) && ego_next.v < STOP_SPEED {
            state.stopped_at_line = true;
        }
        if s_prev < line && proj.s >= line {
            let t = (state.step + 1) as f64 * dt;
            match config.template.control {
                TrafficControl::Signal => red = ego_signal_phase(t) == SignalPhase::Red,
                TrafficControl::StopSign => stop_sign = !state.stopped_at_line,
                TrafficControl::None => {}
            }
        }
    }

    let mut collision = false;
    for i in 0..next.len() {
        for j in i + 1..next.len() {
            let r = config.agents[i].class.radius() + config.agents[j].class.radius();
            collision |= next[i].pos().dist(next[j].pos()) < r;
        }
    }

    state.agents = next;
    state.step += 1;
    state.finished = collision || state.progress >= COMPLETION;
    Frame {
        step: state.step,
        t: state.step as f64 * dt,
        agents: state.agents.clone(),
        collision,
        lane_invasion: proj.lateral.abs() > w / 2.0,
        out_of_road: config.template.out_of_road(ego_next.pos()),
        red_light_violation: red,
        stop_sign_violation: stop_sign,
        lateral_offset: proj.lateral,
        progress: state.progress,
    }
}

/// Step until collision, route completion or the step limit.
///
/// The trace is a pure function of the inputs; `seed` is recorded in the
/// header for bookkeeping since no step consumes randomness.
pub fn run(config: &SceneConfig, driver: &dyn Driver, seed: u64) -> SceneTrace {
    let mut state = SceneState::new(config, driver);
    let header = TraceHeader::new(config, driver, seed, &state.agents);
    let mut frames = Vec::new();
    while !state.finished && state.step < config.max_steps {
        frames.push(step(config, &mut state, driver));
    }
    SceneTrace { header, frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::RoadSpec;

    #[test]
    fn placements_on_a_straight_road() {
        let t = RoadTemplate::new(RoadSpec::StraightRoad { lanes_per_direction: 1 }, 3.5);
        let ego = t.route(Maneuver::Straight, 0).unwrap().start_pose();
        let a = resolve_placement(&t, ego, PlacementKind::Ahead, 15.0, AgentClass::Car).unwrap();
        assert!((a.x - ego.x - 15.0).abs() < 1e-9 && (a.y - ego.y).abs() < 1e-9);
        let o = resolve_placement(&t, ego, PlacementKind::OncomingLane, 30.0, AgentClass::Car).unwrap();
        assert!((o.y - 1.75).abs() < 1e-9);
        assert!((o.yaw.abs() - std::f64::consts::PI).abs() < 1e-9);
        let r = resolve_placement(&t, ego, PlacementKind::RightFront, 10.0, AgentClass::Pedestrian).unwrap();
        assert!((r.y + 3.5 + 1.5).abs() < 1e-9);
        assert!(resolve_placement(&t, ego, PlacementKind::Behind, 100.0, AgentClass::Car).is_err());
        assert!(resolve_placement(&t, ego, PlacementKind::CrossingFromLeft, 10.0, AgentClass::Car).is_err());
    }

    #[test]
    fn crossing_placements_at_a_junction() {
        let t = RoadTemplate::new(RoadSpec::FourWayIntersection { signalized: true }, 3.5);
        let ego = t.route(Maneuver::Straight, 0).unwrap().start_pose();
        let l = resolve_placement(&t, ego, PlacementKind::CrossingFromLeft, 20.0, AgentClass::Car).unwrap();
        assert!((l.x + 20.0).abs() < 1e-9 && (l.y + 1.75).abs() < 1e-9 && l.yaw.abs() < 1e-9);
        let r = resolve_placement(&t, ego, PlacementKind::CrossingFromRight, 20.0, AgentClass::Car).unwrap();
        assert!((r.x - 20.0).abs() < 1e-9 && (r.y - 1.75).abs() < 1e-9);
        assert!(t.out_of_road(l.pos()) < 1e-9 && t.out_of_road(r.pos()) < 1e-9);
    }

    #[test]
    fn control_clamps_to_bounds() {
        let c = Control {
            accel: -20.0,
            yaw_rate: 5.0,
        }
        .clamped();
        assert_eq!(
            c,
            Control {
                accel: -6.0,
                yaw_rate: 0.6
            }
        );
        assert!(c.within_bounds());
    }
}
