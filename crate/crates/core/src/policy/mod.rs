//! Rule-based ego controller and a cross-entropy search over its parameters.

mod cem;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::geom::{wrap_angle, Vec2};
use crate::sim::{Control, Driver, SceneView, EGO_ACCEL_MAX, EGO_ACCEL_MIN, EGO_YAW_RATE_MAX};

pub use cem::{evaluate, finetune, CemConfig, FinetuneResult, GenerationLog, TrainingScore};

/// Route waypoint spacing, m.
pub const WAYPOINT_SPACING: f64 = 5.0;
/// Lateral acceleration allowed on curves, m/s².
pub const LATERAL_ACCEL: f64 = 2.5;
/// Fraction of the yaw-rate bound used when capping speed on curves.
const YAW_MARGIN: f64 = 0.8;
const SPEED_GAIN: f64 = 1.5;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("policy parameter `{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("brake_decel {0} exceeds 6 m/s²")]
    BrakeTooStrong(f64),
    #[error("finetune needs at least one training scene")]
    NoTrainingScenes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    /// m/s
    pub target_speed: f64,
    /// Gap to a detected obstacle below which the ego brakes, m.
    pub brake_trigger_distance: f64,
    /// m/s²
    pub brake_decel: f64,
    /// Pure-pursuit scale, 1/s.
    pub steering_gain: f64,
    /// m
    pub detection_range: f64,
    /// rad
    pub detection_half_angle: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            target_speed: 8.0,
            brake_trigger_distance: 4.0,
            brake_decel: 6.0,
            steering_gain: 1.0,
            detection_range: 20.0,
            detection_half_angle: 30f64.to_radians(),
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        for (name, v) in [
            ("target_speed", self.target_speed),
            ("brake_trigger_distance", self.brake_trigger_distance),
            ("brake_decel", self.brake_decel),
            ("steering_gain", self.steering_gain),
            ("detection_range", self.detection_range),
            ("detection_half_angle", self.detection_half_angle),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PolicyError::NonPositive(name));
            }
        }
        if self.brake_decel > 6.0 {
            return Err(PolicyError::BrakeTooStrong(self.brake_decel));
        }
        Ok(())
    }
}

/// The four observation channels plus the quantities the controller derives from the same state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dist_next_waypoint: f64,
    pub longitudinal_speed: f64,
    pub angular_speed: f64,
    /// 1 when any agent center lies in the forward sector, else 0.
    pub front_detection: f64,
    /// Bearing of the pure-pursuit lookahead point relative to the heading, rad.
    pub heading_error: f64,
    /// Distance to the lookahead point, m.
    pub lookahead_distance: f64,
    /// Smallest footprint gap to a detected agent; the detection range when none.
    pub front_distance: f64,
    /// Largest route curvature over the preview horizon, 1/m.
    pub path_curvature: f64,
}

/// Whether `target` lies in the closed sector of radius `range` and half-angle `half_angle` ahead of `pos`.
pub fn in_sector(pos: Vec2, yaw: f64, target: Vec2, range: f64, half_angle: f64) -> bool {
    let d = target - pos;
    let r = d.norm();
    if r > range {
        return false;
    }
    r == 0.0 || wrap_angle(d.angle() - yaw).abs() <= half_angle + 1e-9
}

pub fn observe(view: &SceneView, params: &PolicyParams) -> Observation {
    let ego = view.ego;
    let p = ego.pos();
    let path = &view.route.path;
    let len = path.length();
    let v = ego.v;

    let next_s = (((view.s / WAYPOINT_SPACING).floor() + 1.0) * WAYPOINT_SPACING).min(len);
    let ld = (0.8 * v).max(4.0);
    let q = path.point_at(view.s + ld);
    let to_q = q - p;
    let heading_error = if to_q.norm() < 1e-9 {
        0.0
    } else {
        wrap_angle(to_q.angle() - ego.yaw)
    };

    let preview = 2.0 * v + 5.0;
    let mut kappa: f64 = 0.0;
    let mut s = view.s;
    while s <= (view.s + preview).min(len) {
        kappa = kappa.max(path.curvature_at(s, 1.0));
        s += 1.0;
    }

    let mut detected = false;
    let mut front = params.detection_range;
    for &(c, r) in &view.others {
        if in_sector(p, ego.yaw, c, params.detection_range, params.detection_half_angle) {
            detected = true;
            front = front.min(c.dist(p) - r - view.ego_radius);
        }
    }

    Observation {
        dist_next_waypoint: p.dist(path.point_at(next_s)),
        longitudinal_speed: v,
        angular_speed: ego.w,
        front_detection: if detected { 1.0 } else { 0.0 },
        heading_error,
        lookahead_distance: to_q.norm().max(1e-3),
        front_distance: front,
        path_curvature: kappa,
    }
}

pub fn act(obs: &Observation, params: &PolicyParams) -> Control {
    let v = obs.longitudinal_speed;
    let yaw_rate = params.steering_gain * 2.0 * v * obs.heading_error.sin() / obs.lookahead_distance;
    let mut cap = params.target_speed;
    if obs.path_curvature > 1e-6 {
        cap = cap
            .min(YAW_MARGIN * EGO_YAW_RATE_MAX / obs.path_curvature)
            .min((LATERAL_ACCEL / obs.path_curvature).sqrt());
    }
    let mut accel = (SPEED_GAIN * (cap - v)).clamp(EGO_ACCEL_MIN, EGO_ACCEL_MAX);
    if obs.front_detection >= 0.5 && obs.front_distance < params.brake_trigger_distance {
        accel = -params.brake_decel;
    }
    Control {
        accel: accel.clamp(EGO_ACCEL_MIN, EGO_ACCEL_MAX),
        yaw_rate: yaw_rate.clamp(-EGO_YAW_RATE_MAX, EGO_YAW_RATE_MAX),
    }
}

impl Driver for PolicyParams {
    fn control(&self, view: &SceneView) -> Control {
        act(&observe(view, self), self)
    }

    fn initial_speed(&self) -> f64 {
        self.target_speed
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("params serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_membership() {
        let o = Vec2::new(0.0, 0.0);
        let th = 30f64.to_radians();
        assert!(in_sector(o, 0.0, Vec2::new(5.0, 0.0), 20.0, th));
        assert!(!in_sector(o, 0.0, Vec2::new(-5.0, 0.0), 20.0, th));
        assert!(in_sector(o, 0.0, Vec2::from_angle(th) * 10.0, 20.0, th));
        assert!(!in_sector(o, 0.0, Vec2::from_angle(th + 1e-6) * 10.0, 20.0, th));
        assert!(in_sector(o, 0.0, Vec2::new(20.0, 0.0), 20.0, th));
        assert!(!in_sector(o, 0.0, Vec2::new(20.0001, 0.0), 20.0, th));
    }

    fn obs() -> Observation {
        Observation {
            dist_next_waypoint: 3.0,
            longitudinal_speed: 8.0,
            angular_speed: 0.0,
            front_detection: 0.0,
            heading_error: 0.0,
            lookahead_distance: 6.4,
            front_distance: 20.0,
            path_curvature: 0.0,
        }
    }

    #[test]
    fn brakes_when_obstacle_inside_trigger() {
        let p = PolicyParams::default();
        assert_eq!(act(&obs(), &p).accel, 0.0);
        let o = Observation {
            front_detection: 1.0,
            front_distance: 3.0,
            ..obs()
        };
        assert_eq!(act(&o, &p).accel, -6.0);
        let o = Observation {
            front_detection: 1.0,
            front_distance: 5.0,
            ..obs()
        };
        assert_eq!(act(&o, &p).accel, 0.0);
    }

    #[test]
    fn curvature_caps_speed() {
        let o = Observation {
            path_curvature: 0.1,
            ..obs()
        };
        assert!(act(&o, &PolicyParams::default()).accel < 0.0);
    }

    #[test]
    fn validation() {
        PolicyParams::default().validate().unwrap();
        let p = PolicyParams {
            brake_decel: 7.0,
            ..PolicyParams::default()
        };
        assert_eq!(p.validate(), Err(PolicyError::BrakeTooStrong(7.0)));
        let p = PolicyParams {
            target_speed: 0.0,
            ..PolicyParams::default()
        };
        assert!(p.validate().is_err());
    }
}
