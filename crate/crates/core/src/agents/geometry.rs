use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CircleRepr", into = "CircleRepr")]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircleRepr {
    x: f64,
    y: f64,
    radius: f64,
}

impl From<CircleRepr> for Circle {
    fn from(r: CircleRepr) -> Self {
        Circle::new(r.x, r.y, r.radius)
    }
}

impl From<Circle> for CircleRepr {
    fn from(c: Circle) -> Self {
        CircleRepr {
            x: c.center.x,
            y: c.center.y,
            radius: c.radius,
        }
    }
}

impl Circle {
    pub const fn new(x: f64, y: f64, radius: f64) -> Self {
        Self {
            center: Point::new(x, y),
            radius,
        }
    }

    /// Closed disc membership.
    pub fn contains(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius
    }
}
