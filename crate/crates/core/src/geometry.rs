//! Planar geometry primitives shared by the simulator, perception and planner.
//!
//! Everything is in a right-handed world frame: `x` forward along the driving
//! lane, `y` to the left, headings counter-clockwise from `+x`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
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

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = theta.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Axis-aligned rectangle. Used for bays, lanes and parked vehicle footprints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Vec2, half_x: f64, half_y: f64) -> Self {
        Self::new(
            Vec2::new(center.x - half_x, center.y - half_y),
            Vec2::new(center.x + half_x, center.y + half_y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to the rectangle; zero inside.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn to_oriented(&self) -> OrientedRect {
        OrientedRect::new(self.center(), self.width() * 0.5, self.height() * 0.5, 0.0)
    }
}

/// Rectangle with arbitrary heading; `half_extents.x` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientedRect {
    pub center: Vec2,
    pub half_extents: Vec2,
    pub heading: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, half_length: f64, half_width: f64, heading: f64) -> Self {
        Self {
            center,
            half_extents: Vec2::new(half_length, half_width),
            heading,
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.x * self.half_extents.y
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (hx, hy) = (self.half_extents.x, self.half_extents.y);
        [
            Vec2::new(-hx, -hy),
            Vec2::new(hx, -hy),
            Vec2::new(hx, hy),
            Vec2::new(-hx, hy),
        ]
        .map(|c| self.center + c.rotate(self.heading))
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotate(-self.heading)
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let q = self.to_local(p);
        q.x.abs() <= self.half_extents.x && q.y.abs() <= self.half_extents.y
    }

    /// Distance from the boundary, negative inside (depth of the nearest edge).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let q = self.to_local(p);
        let dx = q.x.abs() - self.half_extents.x;
        let dy = q.y.abs() - self.half_extents.y;
        if dx <= 0.0 && dy <= 0.0 {
            dx.max(dy)
        } else {
            dx.max(0.0).hypot(dy.max(0.0))
        }
    }

    /// Parameter `t in [0, 1]` where the segment `p -> q` first touches the rectangle.
    pub fn segment_entry(&self, p: Vec2, q: Vec2) -> Option<f64> {
        // Liang-Barsky in the rectangle's frame.
        let a = self.to_local(p);
        let b = self.to_local(q);
        let d = b - a;
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let checks = [
            (-d.x, a.x + self.half_extents.x),
            (d.x, self.half_extents.x - a.x),
            (-d.y, a.y + self.half_extents.y),
            (d.y, self.half_extents.y - a.y),
        ];
        for (pk, qk) in checks {
            if pk == 0.0 {
                if qk < 0.0 {
                    return None;
                }
            } else {
                let r = qk / pk;
                if pk < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

impl From<Aabb> for OrientedRect {
    fn from(b: Aabb) -> Self {
        b.to_oriented()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    /// Parameter `t in [0, 1]` where the segment `p -> q` first touches the disc.
    pub fn segment_entry(&self, p: Vec2, q: Vec2) -> Option<f64> {
        let d = q - p;
        let f = p - self.center;
        let c = f.dot(f) - self.radius * self.radius;
        if c <= 0.0 {
            return Some(0.0);
        }
        let a = d.dot(d);
        if a == 0.0 {
            return None;
        }
        let b = 2.0 * f.dot(d);
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / (2.0 * a);
        (0.0..=1.0).contains(&t).then_some(t)
    }
}

/// Closed overlap test between a disc and an oriented rectangle.
pub fn disc_touches_rect(disc: &Disc, rect: &OrientedRect) -> bool {
    rect.signed_distance(disc.center) <= disc.radius
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

fn clip_halfplane(poly: &[Vec2], a: Vec2, b: Vec2) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    let side = |p: Vec2| (b - a).cross(p - a);
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let ds = side(s);
        let de = side(e);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push(s + (e - s) * t);
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

/// Sutherland-Hodgman clipping of `subject` against a convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.len() < 3 {
            return Vec::new();
        }
        out = clip_halfplane(&out, clip[i], clip[(i + 1) % clip.len()]);
    }
    if out.len() < 3 {
        Vec::new()
    } else {
        out
    }
}

/// Exact area of the intersection of two oriented rectangles.
pub fn intersection_area(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let poly = clip_convex(&a.corners(), &b.corners());
    polygon_signed_area(&poly).abs()
}
