//! Road templates, lane centerlines, traffic control and ego routes.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::geom::{arc, Polyline, Pose, Vec2};
use super::SimError;
use crate::dsl::{Maneuver, RoadSpec};

/// Half-width of the square junction box.
pub const JUNCTION_HALF_WIDTH: f64 = 12.0;
/// Length of each junction arm beyond the box.
pub const ARM_LENGTH: f64 = 100.0;
/// Straight-road extent along x.
pub const ROAD_START: f64 = -40.0;
pub const ROAD_END: f64 = 300.0;
pub const STRAIGHT_ROUTE_LENGTH: f64 = 130.0;
/// Exit leg after a junction.
pub const EXIT_LENGTH: f64 = 40.0;
/// Routes offered per template and maneuver.
pub const ROUTE_COUNT: usize = 6;
/// Lane-change window along straight routes.
pub const LANE_CHANGE_START: f64 = 40.0;
pub const LANE_CHANGE_END: f64 = 70.0;
/// Signal cycle for the ego's approach axis: green, yellow, then red.
pub const SIGNAL_CYCLE: f64 = 30.0;
pub const SIGNAL_GREEN: f64 = 12.0;
pub const SIGNAL_YELLOW: f64 = 3.0;

const STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficControl {
    None,
    Signal,
    StopSign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPhase {
    Green,
    Yellow,
    Red,
}

/// Phase shown to the ego approach at time `t`.
pub fn ego_signal_phase(t: f64) -> SignalPhase {
    let c = t.rem_euclid(SIGNAL_CYCLE);
    if c < SIGNAL_GREEN {
        SignalPhase::Green
    } else if c < SIGNAL_GREEN + SIGNAL_YELLOW {
        SignalPhase::Yellow
    } else {
        SignalPhase::Red
    }
}

/// Instantiated road template.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadTemplate {
    pub spec: RoadSpec,
    pub lane_width: f64,
    pub lanes_per_direction: u32,
    /// Centerlines of every lane, in travel direction.
    pub lanes: Vec<Polyline>,
    /// Junction box half-width, for intersections.
    pub junction: Option<f64>,
    /// Control on the ego approach.
    pub control: TrafficControl,
}

/// Ego route on a template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: usize,
    pub maneuver: Maneuver,
    pub path: Polyline,
    /// Arc length at which the route enters the junction box.
    pub stop_line_s: Option<f64>,
}

impl Route {
    pub fn length(&self) -> f64 {
        self.path.length()
    }

    pub fn start_pose(&self) -> Pose {
        Pose::new(self.path.points[0], self.path.heading_at(0.0))
    }
}

fn right_of(d: Vec2) -> Vec2 {
    Vec2::new(d.y, -d.x)
}

impl RoadTemplate {
    pub fn new(spec: RoadSpec, lane_width: f64) -> Self {
        let w = lane_width;
        match spec {
            RoadSpec::StraightRoad { lanes_per_direction } => {
                let n = lanes_per_direction.max(1);
                let mut lanes = Vec::new();
                for k in 0..n {
                    let off = (k as f64 + 0.5) * w;
                    lanes.push(Polyline::new(vec![
                        Vec2::new(ROAD_START, -off),
                        Vec2::new(ROAD_END, -off),
                    ]));
                    lanes.push(Polyline::new(vec![
                        Vec2::new(ROAD_END, off),
                        Vec2::new(ROAD_START, off),
                    ]));
                }
                RoadTemplate {
                    spec,
                    lane_width: w,
                    lanes_per_direction: n,
                    lanes,
                    junction: None,
                    control: TrafficControl::None,
                }
            }
            RoadSpec::FourWayIntersection { signalized } => {
                let arms = [
                    Vec2::new(0.0, -1.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(0.0, 1.0),
                    Vec2::new(-1.0, 0.0),
                ];
                RoadTemplate {
                    spec,
                    lane_width: w,
                    lanes_per_direction: 1,
                    lanes: junction_lanes(&arms, w),
                    junction: Some(JUNCTION_HALF_WIDTH),
                    control: if signalized {
                        TrafficControl::Signal
                    } else {
                        TrafficControl::StopSign
                    },
                }
            }
            RoadSpec::TIntersection => {
                let arms = [Vec2::new(0.0, -1.0), Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)];
                RoadTemplate {
                    spec,
                    lane_width: w,
                    lanes_per_direction: 1,
                    lanes: junction_lanes(&arms, w),
                    junction: Some(JUNCTION_HALF_WIDTH),
                    control: TrafficControl::StopSign,
                }
            }
        }
    }

    pub fn route_count(&self) -> usize {
        ROUTE_COUNT
    }

    pub fn in_junction(&self, p: Vec2) -> bool {
        self.junction.is_some_and(|h| p.x.abs() <= h && p.y.abs() <= h)
    }

    /// Distance beyond the nearest lane's edge; zero inside the junction box.
    pub fn out_of_road(&self, p: Vec2) -> f64 {
        if self.in_junction(p) {
            return 0.0;
        }
        let d = self.lanes.iter().map(|l| l.distance(p)).fold(f64::INFINITY, f64::min);
        (d - self.lane_width / 2.0).max(0.0)
    }

    /// Whether `p` lies within the template's extent, allowing `margin` beyond the road edge.
    pub fn within_extent(&self, p: Vec2, margin: f64) -> bool {
        let w = self.lane_width;
        match self.junction {
            None => {
                let half = self.lanes_per_direction as f64 * w + margin;
                (ROAD_START..=ROAD_END).contains(&p.x) && p.y.abs() <= half
            }
            Some(h) => {
                let reach = h + ARM_LENGTH;
                let half = w + margin;
                if p.x.abs() <= h + margin && p.y.abs() <= h + margin {
                    return true;
                }
                let south = p.x.abs() <= half && (-reach..=-h).contains(&p.y);
                let north = p.x.abs() <= half && (h..=reach).contains(&p.y);
                let ew = p.y.abs() <= half && p.x.abs() >= h && p.x.abs() <= reach;
                match self.spec {
                    RoadSpec::TIntersection => south || ew,
                    _ => south || north || ew,
                }
            }
        }
    }

    /// Ego route `id` for `maneuver`.
    pub fn route(&self, maneuver: Maneuver, id: usize) -> Result<Route, SimError> {
        if id >= self.route_count() {
            return Err(SimError::RouteOutOfRange {
                route: id,
                available: self.route_count(),
            });
        }
        if !crate::dsl::maneuvers_for(self.spec).contains(&maneuver) {
            return Err(SimError::UnsupportedManeuver(maneuver));
        }
        let w = self.lane_width;
        let path = match (self.junction, maneuver) {
            (None, Maneuver::LaneChange) => {
                let x0 = 10.0 * id as f64;
                let n = (STRAIGHT_ROUTE_LENGTH / STEP) as usize;
                let pts = (0..=n)
                    .map(|i| {
                        let s = i as f64 * STEP;
                        let u = ((s - LANE_CHANGE_START) / (LANE_CHANGE_END - LANE_CHANGE_START)).clamp(0.0, 1.0);
                        let smooth = u * u * (3.0 - 2.0 * u);
                        Vec2::new(x0 + s, -w / 2.0 - w * smooth)
                    })
                    .collect();
                Polyline::new(pts)
            }
            (None, _) => {
                let x0 = 10.0 * id as f64;
                Polyline::segment(
                    Vec2::new(x0, -w / 2.0),
                    Vec2::new(x0 + STRAIGHT_ROUTE_LENGTH, -w / 2.0),
                    STEP,
                )
            }
            (Some(h), m) => {
                let approach = 40.0 + 5.0 * id as f64;
                let mut path = Polyline::segment(Vec2::new(w / 2.0, -h - approach), Vec2::new(w / 2.0, -h), STEP);
                let tail = match m {
                    Maneuver::LeftTurn => {
                        let mut p = Polyline::new(arc(Vec2::new(-h, -h), h + w / 2.0, 0.0, FRAC_PI_2, STEP));
                        p.extend(&Polyline::segment(
                            Vec2::new(-h, w / 2.0),
                            Vec2::new(-h - EXIT_LENGTH, w / 2.0),
                            STEP,
                        ));
                        p
                    }
                    Maneuver::RightTurn => {
                        let mut p = Polyline::new(arc(
                            Vec2::new(h, -h),
                            h - w / 2.0,
                            std::f64::consts::PI,
                            FRAC_PI_2,
                            STEP,
                        ));
                        p.extend(&Polyline::segment(
                            Vec2::new(h, -w / 2.0),
                            Vec2::new(h + EXIT_LENGTH, -w / 2.0),
                            STEP,
                        ));
                        p
                    }
                    _ => Polyline::segment(Vec2::new(w / 2.0, -h), Vec2::new(w / 2.0, h + EXIT_LENGTH), STEP),
                };
                path.extend(&tail);
                path
            }
        };
        Ok(Route {
            id,
            maneuver,
            stop_line_s: self.junction.map(|_| 40.0 + 5.0 * id as f64),
            path,
        })
    }

    /// Lateral distances from the ego lane center to the left and right road edges.
    pub fn edge_offsets(&self) -> (f64, f64) {
        let n = self.lanes_per_direction as f64;
        let w = self.lane_width;
        ((n + 0.5) * w, (n - 0.5) * w)
    }
}

fn junction_lanes(arms: &[Vec2], w: f64) -> Vec<Polyline> {
    let h = JUNCTION_HALF_WIDTH;
    let mut lanes = Vec::new();
    for &u in arms {
        let inbound = u * -1.0;
        let a = u * (h + ARM_LENGTH) + right_of(inbound) * (w / 2.0);
        lanes.push(Polyline::new(vec![a, a + inbound * ARM_LENGTH]));
        let b = u * h + right_of(u) * (w / 2.0);
        lanes.push(Polyline::new(vec![b, b + u * ARM_LENGTH]));
    }
    lanes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_cycle() {
        assert_eq!(ego_signal_phase(0.0), SignalPhase::Green);
        assert_eq!(ego_signal_phase(12.5), SignalPhase::Yellow);
        assert_eq!(ego_signal_phase(20.0), SignalPhase::Red);
        assert_eq!(ego_signal_phase(31.0), SignalPhase::Green);
    }

    #[test]
    fn turn_routes_join_exit_lanes() {
        let t = RoadTemplate::new(RoadSpec::FourWayIntersection { signalized: true }, 3.5);
        for m in [Maneuver::LeftTurn, Maneuver::RightTurn, Maneuver::Straight] {
            let r = t.route(m, 0).unwrap();
            for w in r.path.points.windows(2) {
                assert!(w[0].dist(w[1]) < 0.6, "{m:?} gap");
            }
            // every route point lies on some lane or inside the box
            for &p in &r.path.points {
                assert!(t.out_of_road(p) < 1e-9, "{m:?} {p:?}");
            }
            assert_eq!(r.stop_line_s, Some(40.0));
        }
    }

    #[test]
    fn route_bounds() {
        let t = RoadTemplate::new(RoadSpec::TIntersection, 3.5);
        assert!(matches!(
            t.route(Maneuver::LeftTurn, 99),
            Err(SimError::RouteOutOfRange { route: 99, .. })
        ));
        assert!(t.route(Maneuver::Straight, 0).is_err());
    }

    #[test]
    fn lane_change_route_ends_in_right_lane() {
        let t = RoadTemplate::new(RoadSpec::StraightRoad { lanes_per_direction: 2 }, 3.5);
        let r = t.route(Maneuver::LaneChange, 1).unwrap();
        let end = *r.path.points.last().unwrap();
        assert!((end.y + 1.5 * 3.5).abs() < 1e-9);
        assert!((end.x - 10.0 - STRAIGHT_ROUTE_LENGTH).abs() < 1e-9);
        assert_eq!(r.start_pose().x, 10.0);
    }

    #[test]
    fn out_of_road_measures_from_lane_edge() {
        let t = RoadTemplate::new(RoadSpec::StraightRoad { lanes_per_direction: 1 }, 4.0);
        assert_eq!(t.out_of_road(Vec2::new(10.0, -2.0)), 0.0);
        assert!((t.out_of_road(Vec2::new(10.0, -5.0)) - 1.0).abs() < 1e-12);
        assert_eq!(t.out_of_road(Vec2::new(10.0, 2.0)), 0.0);
    }
}
