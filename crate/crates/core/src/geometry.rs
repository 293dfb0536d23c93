//! Points on the annulus `S¹ × [0,1]`, points of its universal cover
//! `ℝ × [0,1]`, and axis-aligned rectangles in cover coordinates.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Reduce an angular coordinate to `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `b - a` reduced to `[-1/2, 1/2)`.
pub fn angular_delta(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// A point of the annulus. `x` is the angle measured in turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusPoint {
    pub x: f64,
    pub y: f64,
}

impl AnnulusPoint {
    /// Builds a point, normalizing the angle into `[0, 1)`.
    pub fn new(x: f64, y: f64) -> Self {
        Self { x: wrap_unit(x), y }
    }

    /// The lift whose angular coordinate lies in `[0, 1)`.
    pub fn lift(self) -> LiftPoint {
        LiftPoint::new(self.x, self.y)
    }

    /// Euclidean distance on the flat cylinder.
    pub fn distance(self, other: AnnulusPoint) -> f64 {
        let dx = angular_delta(self.x, other.x);
        let dy = other.y - self.y;
        dx.hypot(dy)
    }
}

/// A point of the covering strip (or of the plane, for extended maps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftPoint {
    pub x: f64,
    pub y: f64,
}

impl LiftPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn project(self) -> AnnulusPoint {
        AnnulusPoint::new(self.x, self.y)
    }

    /// Deck transformation by `k` full turns.
    pub fn translate(self, k: f64) -> Self {
        Self::new(self.x + k, self.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: LiftPoint) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for LiftPoint {
    type Output = LiftPoint;
    fn add(self, rhs: LiftPoint) -> LiftPoint {
        LiftPoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for LiftPoint {
    type Output = LiftPoint;
    fn sub(self, rhs: LiftPoint) -> LiftPoint {
        LiftPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for LiftPoint {
    type Output = LiftPoint;
    fn mul(self, k: f64) -> LiftPoint {
        LiftPoint::new(self.x * k, self.y * k)
    }
}

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]` in cover coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> LiftPoint {
        LiftPoint::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, p: LiftPoint) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Strict interior membership.
    pub fn contains_open(&self, p: LiftPoint) -> bool {
        p.x > self.x0 && p.x < self.x1 && p.y > self.y0 && p.y < self.y1
    }

    pub fn inflate(&self, r: f64) -> Rect {
        Rect::new(self.x0 - r, self.x1 + r, self.y0 - r, self.y1 + r)
    }

    /// The four quadrants, ordered SW, SE, NW, NE.
    pub fn quadrants(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, xm, self.y0, ym),
            Rect::new(xm, self.x1, self.y0, ym),
            Rect::new(self.x0, xm, ym, self.y1),
            Rect::new(xm, self.x1, ym, self.y1),
        ]
    }

    /// Smallest rectangle containing all `points`; `None` when empty.
    pub fn bounding<I: IntoIterator<Item = LiftPoint>>(points: I) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first.x, first.x, first.y, first.y);
        for p in it {
            r.x0 = r.x0.min(p.x);
            r.x1 = r.x1.max(p.x);
            r.y0 = r.y0.min(p.y);
            r.y1 = r.y1.max(p.y);
        }
        Some(r)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.min(other.x0),
            self.x1.max(other.x1),
            self.y0.min(other.y0),
            self.y1.max(other.y1),
        )
    }
}
