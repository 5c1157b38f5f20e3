//! Planar geometry helpers.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Rotated by +90 degrees.
    pub fn left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Position and heading (radians, counter-clockwise from +x).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(p: Vec2, yaw: f64) -> Self {
        Pose { x: p.x, y: p.y, yaw }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn fwd(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }
}

/// Angle wrapped to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Directed straight line through `origin` along unit `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub origin: Vec2,
    pub dir: Vec2,
}

impl Line {
    pub fn from_pose(p: &Pose) -> Self {
        Line {
            origin: p.pos(),
            dir: p.fwd(),
        }
    }

    /// Signed offset of `p`, positive to the left.
    pub fn lateral(&self, p: Vec2) -> f64 {
        self.dir.cross(p - self.origin)
    }

    pub fn along(&self, p: Vec2) -> f64 {
        self.dir.dot(p - self.origin)
    }

    pub fn shifted(&self, left: f64) -> Line {
        Line {
            origin: self.origin + self.dir.left() * left,
            dir: self.dir,
        }
    }
}

/// Result of projecting a point onto a [`Polyline`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed distance, positive to the left of the travel direction.
    pub lateral: f64,
    pub segment: usize,
}

/// Polyline with cumulative arc lengths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    #[serde(skip)]
    cum: Vec<f64>,
}

impl Polyline {
    /// Consecutive duplicate points are dropped. Panics with fewer than two distinct points.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q| q.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        assert!(pts.len() >= 2, "polyline needs two distinct points");
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(w[1]));
        }
        Polyline { points: pts, cum }
    }

    pub fn segment(a: Vec2, b: Vec2, step: f64) -> Self {
        let n = ((a.dist(b) / step).ceil() as usize).max(1);
        Polyline::new((0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect())
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// Append `other`, skipping its first point when it coincides with our last.
    pub fn extend(&mut self, other: &Polyline) {
        let mut pts = std::mem::take(&mut self.points);
        pts.extend(other.points.iter().copied());
        *self = Polyline::new(pts);
    }

    fn locate(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => (i - 1).min(self.points.len() - 2),
        }
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.locate(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.cum[i + 1] - self.cum[i];
        let t = ((s.clamp(0.0, self.length()) - self.cum[i]) / seg).clamp(0.0, 1.0);
        a + (b - a) * t
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.locate(s);
        (self.points[i + 1] - self.points[i]).angle()
    }

    /// Unsigned curvature estimate at arc length `s`, from headings `ds` apart.
    pub fn curvature_at(&self, s: f64, ds: f64) -> f64 {
        let a = self.heading_at(s - ds);
        let b = self.heading_at(s + ds);
        wrap_angle(b - a).abs() / (2.0 * ds)
    }

    fn project_segment(&self, p: Vec2, i: usize) -> (f64, Projection) {
        let (a, b) = (self.points[i], self.points[i + 1]);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
        let foot = a + ab * t;
        let d = p.dist(foot);
        let side = ab.cross(p - a);
        let lateral = if side < 0.0 { -d } else { d };
        (
            d,
            Projection {
                s: self.cum[i] + t * len2.sqrt(),
                lateral,
                segment: i,
            },
        )
    }

    /// Closest point over all segments; ties resolve to the lowest segment.
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.points.len() - 1)
    }

    /// Closest point over segments whose arc-length span meets `[s_lo, s_hi]`.
    pub fn project_window(&self, p: Vec2, s_lo: f64, s_hi: f64) -> Projection {
        let lo = self.locate(s_lo);
        let hi = (self.locate(s_hi) + 1).min(self.points.len() - 1);
        self.project_range(p, lo, hi)
    }

    fn project_range(&self, p: Vec2, lo: usize, hi: usize) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        for i in lo..hi.max(lo + 1) {
            let cand = self.project_segment(p, i);
            if best.as_ref().is_none_or(|b| cand.0 < b.0) {
                best = Some(cand);
            }
        }
        best.unwrap().1
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.project(p).lateral.abs()
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<Vec2>,
        }
        let raw = Raw::deserialize(d)?;
        if raw.points.len() < 2 {
            return Err(serde::de::Error::custom("polyline needs two points"));
        }
        Ok(Polyline::new(raw.points))
    }
}

/// Points on a circular arc from angle `a0` to `a1` about `center`, about `step` apart.
pub fn arc(center: Vec2, radius: f64, a0: f64, a1: f64, step: f64) -> Vec<Vec2> {
    let n = (((a1 - a0).abs() * radius / step).ceil() as usize).max(2);
    (0..=n)
        .map(|i| center + Vec2::from_angle(a0 + (a1 - a0) * i as f64 / n as f64) * radius)
        .collect()
}
