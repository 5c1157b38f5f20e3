mod common;

use common::{lead_car_scene, timid_brake_policy};
use proptest::prelude::*;
use scenforge::dsl::{Maneuver, RoadSpec};
use scenforge::metrics::MetricWeights;
use scenforge::policy::*;
use scenforge::sim::geom::Vec2;
use scenforge::sim::road::RoadTemplate;
use scenforge::sim::{AgentState, SceneConfig, SceneView};

fn detects(other: Vec2) -> f64 {
    let t = RoadTemplate::new(RoadSpec::StraightRoad { lanes_per_direction: 1 }, 3.5);
    let route = t.route(Maneuver::Straight, 0).unwrap();
    let start = route.start_pose();
    let view = SceneView {
        ego: AgentState {
            x: start.x,
            y: start.y,
            yaw: 0.0,
            v: 5.0,
            a: 0.0,
            w: 0.0,
        },
        ego_radius: 1.2,
        others: vec![(start.pos() + other, 1.2)],
        route: &route,
        s: 0.0,
    };
    observe(&view, &PolicyParams::default()).front_detection
}

#[test]
fn front_sector_examples() {
    let th = PolicyParams::default().detection_half_angle;
    assert_eq!(detects(Vec2::new(5.0, 0.0)), 1.0);
    assert_eq!(detects(Vec2::new(-5.0, 0.0)), 0.0);
    assert_eq!(detects(Vec2::from_angle(th) * 10.0), 1.0);
    assert_eq!(detects(Vec2::from_angle(-th) * 10.0), 1.0);
    assert_eq!(detects(Vec2::from_angle(th + 1e-3) * 10.0), 0.0);
    assert_eq!(detects(Vec2::new(25.0, 0.0)), 0.0);
}

fn braking_set() -> (Vec<SceneConfig>, Vec<SceneConfig>) {
    let all: Vec<SceneConfig> = (0..6)
        .map(|r| lead_car_scene(40.0 + 4.0 * r as f64, 0.5 * (r % 3) as f64, r))
        .collect();
    (all[..4].to_vec(), all[4..].to_vec())
}

fn small_cem() -> CemConfig {
    CemConfig {
        population: 12,
        generations: 4,
        ..CemConfig::default()
    }
}

#[test]
fn grid_search_confirms_the_braking_set_is_solvable() {
    let (train, _) = braking_set();
    let w = MetricWeights::default();
    let base = timid_brake_policy();
    assert_eq!(evaluate(&base, &train, &w).cr, 1.0);
    for k in 0..=18 {
        let trigger = 12.0 + k as f64;
        let p = PolicyParams {
            brake_trigger_distance: trigger,
            ..base
        };
        let s = evaluate(&p, &train, &w);
        assert_eq!(s.cr, 0.0, "trigger {trigger}");
        assert!(s.comp > 0.3);
    }
}

#[test]
fn finetune_clears_the_braking_set() {
    let (train, test) = braking_set();
    let w = MetricWeights::default();
    let r = finetune(&timid_brake_policy(), &train, 48, 3, &small_cem(), &w).unwrap();
    assert_eq!(r.initial.cr, 1.0);
    assert_eq!(r.score.cr, 0.0);
    assert!(r.score.comp >= 0.3);
    assert_eq!(evaluate(&r.params, &train, &w), r.score);
    assert!(evaluate(&r.params, &test, &w).cr < evaluate(&timid_brake_policy(), &test, &w).cr);
    r.params.validate().unwrap();
    assert_eq!(r.params.detection_range, timid_brake_policy().detection_range);
    assert!(r.log.last().unwrap().evaluations <= 48);
}

#[test]
fn zero_budget_returns_the_input() {
    let (train, _) = braking_set();
    let p = timid_brake_policy();
    let r = finetune(&p, &train, 0, 1, &CemConfig::default(), &MetricWeights::default()).unwrap();
    assert_eq!(r.params, p);
    assert!(r.log.is_empty());
    assert_eq!(r.score, r.initial);
}

#[test]
fn finetune_is_seed_deterministic() {
    let (train, _) = braking_set();
    let w = MetricWeights::default();
    let a = finetune(&timid_brake_policy(), &train, 24, 9, &small_cem(), &w).unwrap();
    let b = finetune(&timid_brake_policy(), &train, 24, 9, &small_cem(), &w).unwrap();
    assert_eq!(a, b);
}

#[test]
fn finetune_rejects_bad_inputs() {
    let w = MetricWeights::default();
    assert!(matches!(
        finetune(&PolicyParams::default(), &[], 10, 0, &CemConfig::default(), &w),
        Err(PolicyError::NoTrainingScenes)
    ));
    let (train, _) = braking_set();
    let bad = PolicyParams {
        brake_decel: 9.0,
        ..PolicyParams::default()
    };
    assert!(finetune(&bad, &train, 10, 0, &CemConfig::default(), &w).is_err());
}

fn arb_obs() -> impl Strategy<Value = Observation> {
    (
        0.0f64..10.0,
        0.0f64..30.0,
        -2.0f64..2.0,
        prop::bool::ANY,
        -3.2f64..3.2,
        0.001f64..40.0,
        -5.0f64..40.0,
        0.0f64..1.0,
    )
        .prop_map(|(d, v, w, det, he, ld, fd, k)| Observation {
            dist_next_waypoint: d,
            longitudinal_speed: v,
            angular_speed: w,
            front_detection: if det { 1.0 } else { 0.0 },
            heading_error: he,
            lookahead_distance: ld,
            front_distance: fd,
            path_curvature: k,
        })
}

fn arb_params() -> impl Strategy<Value = PolicyParams> {
    (0.5f64..20.0, 0.1f64..40.0, 0.1f64..6.0, 0.1f64..3.0).prop_map(|(v, t, b, g)| PolicyParams {
        target_speed: v,
        brake_trigger_distance: t,
        brake_decel: b,
        steering_gain: g,
        ..PolicyParams::default()
    })
}

proptest! {
    #[test]
    fn act_is_pure_and_bounded(o in arb_obs(), p in arb_params()) {
        let c = act(&o, &p);
        prop_assert!(c.within_bounds());
        prop_assert_eq!(c, act(&o, &p));
        if o.front_detection == 1.0 && o.front_distance < p.brake_trigger_distance {
            prop_assert_eq!(c.accel, -p.brake_decel);
        }
    }

    #[test]
    fn finetune_never_raises_training_cr(seed in any::<u64>(), budget in 0usize..20, start in arb_params()) {
        let (train, _) = braking_set();
        let w = MetricWeights::default();
        let cfg = CemConfig { population: 6, generations: 3, ..CemConfig::default() };
        let r = finetune(&start, &train[..2], budget, seed, &cfg, &w).unwrap();
        prop_assert!(r.score.cr <= r.initial.cr);
        prop_assert_eq!(evaluate(&r.params, &train[..2], &w).cr, r.score.cr);
        let mut prev = r.initial.cr;
        for g in &r.log {
            prop_assert!(g.best_score.cr <= prev);
            prev = g.best_score.cr;
        }
    }
}
