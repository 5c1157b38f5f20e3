#![allow(dead_code)]

pub mod dsl_gen;

use scenforge::dsl::{assemble_script, compatible, parse_snippet, ComponentKind, SceneScript};
use scenforge::kb::seed_kb;
use scenforge::metrics::SceneMetrics;
use scenforge::policy::PolicyParams;
use scenforge::sampler::ParamAssignment;
use scenforge::sim::geom::Vec2;
use scenforge::sim::{accel_limit, build_scene, run, AgentState, Frame, SceneConfig, SceneTrace, EGO_ACCEL_MIN};

pub fn script(behavior: &str, geometry: &str, spawn: &str) -> SceneScript {
    assemble_script(
        parse_snippet(behavior, ComponentKind::Behavior).unwrap(),
        parse_snippet(geometry, ComponentKind::Geometry).unwrap(),
        parse_snippet(spawn, ComponentKind::SpawnPosition).unwrap(),
    )
    .unwrap()
}

/// Every script the seed corpus admits.
pub fn seed_scripts() -> Vec<SceneScript> {
    let kb = seed_kb();
    let of = |k: ComponentKind| kb.entries().iter().filter(move |e| e.kind == k).collect::<Vec<_>>();
    let mut out = Vec::new();
    for g in of(ComponentKind::Geometry) {
        for s in of(ComponentKind::SpawnPosition) {
            if !compatible(&g.snippet, &s.snippet) {
                continue;
            }
            for b in of(ComponentKind::Behavior) {
                out.push(assemble_script(b.snippet.clone(), g.snippet.clone(), s.snippet.clone()).unwrap());
            }
        }
    }
    out
}

/// Map unit draws onto the declared parameter ranges.
pub fn assignment_from_units(script: &SceneScript, units: &[f64]) -> ParamAssignment {
    let mut a = ParamAssignment::default();
    for (i, p) in script.params.iter().enumerate() {
        let u = units[i % units.len()];
        a.insert(p.name.clone(), p.lo + u * (p.hi - p.lo));
    }
    a
}

pub fn random_scene(scripts: &[SceneScript], pick: usize, route: usize, units: &[f64]) -> Option<SceneConfig> {
    let s = &scripts[pick % scripts.len()];
    build_scene(s, &assignment_from_units(s, units), route).ok()
}

pub fn policy_from_units(u: &[f64; 4]) -> PolicyParams {
    PolicyParams {
        target_speed: 2.0 + 13.0 * u[0],
        brake_trigger_distance: 0.5 + 29.5 * u[1],
        brake_decel: 1.0 + 5.0 * u[2],
        steering_gain: 0.3 + 1.7 * u[3],
        ..PolicyParams::default()
    }
}

fn seg_dist(p: (f64, f64), a: Vec2, b: Vec2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.x) * dx + (p.1 - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.x - t * dx).powi(2) + (p.1 - a.y - t * dy).powi(2)).sqrt()
}

/// Euclidean distance from `p` to a point chain, by scanning every segment.
pub fn chain_dist(p: (f64, f64), pts: &[Vec2]) -> f64 {
    pts.windows(2)
        .map(|w| seg_dist(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Re-derive every frame flag from positions alone and check physical bounds.
pub fn rescan(config: &SceneConfig, trace: &SceneTrace) -> Result<(), String> {
    let h = &trace.header;
    let w = h.lane_width;
    let dt = h.dt;
    if trace.frames.len() > h.max_steps as usize {
        return Err("too many frames".into());
    }
    let mut prev = h.initial.clone();
    let mut progress = 0.0;
    for (k, f) in trace.frames.iter().enumerate() {
        let n = f.agents.len();
        let mut min_gap = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let d = ((f.agents[i].x - f.agents[j].x).powi(2) + (f.agents[i].y - f.agents[j].y).powi(2)).sqrt();
                min_gap = min_gap.min(d - h.agents[i].radius - h.agents[j].radius);
            }
        }
        if f.collision != (min_gap < 0.0) {
            return Err(format!("frame {k}: collision flag {} but gap {min_gap}", f.collision));
        }
        if f.collision && k + 1 != trace.frames.len() {
            return Err(format!("frame {k}: trace continues after a collision"));
        }

        let ego = (f.agents[0].x, f.agents[0].y);
        let off_route = chain_dist(ego, &config.route.path.points);
        if (off_route - w / 2.0).abs() > 1e-6 && f.lane_invasion != (off_route > w / 2.0) {
            return Err(format!(
                "frame {k}: lane flag {} at distance {off_route}",
                f.lane_invasion
            ));
        }
        let in_box = config
            .template
            .junction
            .is_some_and(|b| ego.0.abs() <= b && ego.1.abs() <= b);
        let nearest = config
            .template
            .lanes
            .iter()
            .map(|l| chain_dist(ego, &l.points))
            .fold(f64::INFINITY, f64::min);
        let oor = if in_box { 0.0 } else { (nearest - w / 2.0).max(0.0) };
        if (oor - f.out_of_road).abs() > 1e-9 {
            return Err(format!("frame {k}: out_of_road {} vs rescan {oor}", f.out_of_road));
        }

        if f.progress < progress || !(0.0..=1.0).contains(&f.progress) {
            return Err(format!("frame {k}: progress {} after {progress}", f.progress));
        }
        progress = f.progress;

        for (i, (a, b)) in prev.iter().zip(&f.agents).enumerate() {
            if b.v < 0.0 {
                return Err(format!("frame {k}: negative speed"));
            }
            if (b.v - a.v).abs() > b.a.abs() * dt + 1e-9 {
                return Err(format!("frame {k} agent {i}: speed jump"));
            }
            let bound = if i == 0 {
                -EGO_ACCEL_MIN
            } else {
                accel_limit(h.agents[i].class)
            };
            if b.a.abs() > bound + 1e-9 {
                return Err(format!("frame {k} agent {i}: accel {} beyond {bound}", b.a));
            }
            let moved = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            if moved > a.v.max(b.v) * dt + 1e-9 {
                return Err(format!("frame {k} agent {i}: moved {moved}"));
            }
        }
        prev = f.agents.clone();
    }
    Ok(())
}

/// Ego starting point for the braking experiments: cruising at 8 m/s with a soft brake.
pub fn timid_brake_policy() -> PolicyParams {
    PolicyParams {
        target_speed: 8.0,
        brake_trigger_distance: 4.0,
        brake_decel: 3.0,
        ..PolicyParams::default()
    }
}

/// A car `dist` metres ahead on the ego lane, creeping at `lead_speed`, on ego route `route`.
pub fn lead_car_scene(dist: f64, lead_speed: f64, route: usize) -> SceneConfig {
    let s = script(
        "agent Car\nbehavior AdvBehavior():\n    do FollowLaneBehavior(V)\nparam V = Range(0, 5)\n",
        "road StraightRoad(1)\nroute Straight\n",
        "spawn Ahead(D)\nparam D = Range(20, 80)\n",
    );
    build_scene(&s, &ParamAssignment::from([("D", dist), ("V", lead_speed)]), route).unwrap()
}

/// Pairwise ADE computed over ordered pairs, written without reference to the library.
pub fn ade_oracle(paths: &[Vec<(f64, f64)>]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for i in 0..paths.len() {
        for j in 0..paths.len() {
            if i == j {
                continue;
            }
            let t = paths[i].len().min(paths[j].len());
            let mut s = 0.0;
            for (p, q) in paths[i][..t].iter().zip(&paths[j][..t]) {
                s += ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
            }
            acc += s / t as f64;
            count += 1.0;
        }
    }
    acc / count
}

/// Sub-metrics spread over plausible ranges from ten unit draws.
pub fn metrics_from_units(u: &[f64]) -> SceneMetrics {
    SceneMetrics {
        cr: (u[0] < 0.5) as u8,
        rr: (u[1] * 5.0) as u32,
        ss: (u[2] * 5.0) as u32,
        or_: u[3] * 20.0,
        rf: u[4],
        comp: u[5],
        ts: u[6],
        acc: u[7] * 10.0,
        yv: u[8],
        li: (u[9] * 8.0) as u32,
        os: 0.0,
    }
}

/// A header from a real run with hand-written ego frames.
pub fn synthetic_trace(frames: usize, lateral: f64, collide_at_end: bool, final_progress: f64) -> SceneTrace {
    let c = lead_car_scene(50.0, 0.0, 0);
    let mut t = run(&c, &PolicyParams::default(), 0);
    let h = &t.header;
    let y0 = h.initial[0].y;
    let adv = h.initial[1];
    t.frames = (1..=frames)
        .map(|k| {
            let ego = AgentState {
                x: k as f64,
                y: y0 + lateral,
                yaw: 0.0,
                v: 10.0,
                a: 0.0,
                w: 0.0,
            };
            Frame {
                step: k as u32,
                t: k as f64 * h.dt,
                agents: vec![ego, adv],
                collision: collide_at_end && k == frames,
                lane_invasion: false,
                out_of_road: 0.0,
                red_light_violation: false,
                stop_sign_violation: false,
                lateral_offset: lateral,
                progress: final_progress * k as f64 / frames as f64,
            }
        })
        .collect();
    t
}

/// Every file under `root`, keyed by relative path.
pub fn dir_snapshot(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}
