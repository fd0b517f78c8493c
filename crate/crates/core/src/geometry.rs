//! Planar geometry used by the map, the sensor model and the planners.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Bearing from `self` towards `other`, in radians.
    pub fn bearing_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Planar robot pose. `heading` is measured counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn at(position: Point, heading: f64) -> Self {
        Pose::new(position.x, position.y, normalize_angle(heading))
    }

    /// Pose at `position` oriented towards `target`.
    pub fn facing(position: Point, target: &Point) -> Self {
        if position.distance_sq(target) == 0.0 {
            return Pose::at(position, 0.0);
        }
        Pose::at(position, position.bearing_to(target))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    /// Builds a rectangle from two opposite corners in any order.
    pub fn from_corners(a: Point, b: Point) -> Self {
        Rect {
            min: Point::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn clamp(&self, p: &Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn center(&self) -> Point {
        self.min.lerp(&self.max, 0.5)
    }
}

/// Simple (non self-intersecting) polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Returns `None` for fewer than three vertices or zero area.
    pub fn new(vertices: Vec<Point>) -> Option<Self> {
        if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let poly = Polygon { vertices };
        if poly.area() <= 0.0 {
            return None;
        }
        Some(poly)
    }

    pub fn rectangle(rect: Rect) -> Self {
        Polygon {
            vertices: vec![
                rect.min,
                Point::new(rect.max.x, rect.min.y),
                rect.max,
                Point::new(rect.min.x, rect.max.y),
            ],
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Axis-aligned rectangle if the polygon is exactly one.
    pub fn as_rect(&self) -> Option<Rect> {
        if self.vertices.len() != 4 {
            return None;
        }
        let bb = self.bounding_box();
        let corners = [
            bb.min,
            Point::new(bb.max.x, bb.min.y),
            bb.max,
            Point::new(bb.min.x, bb.max.y),
        ];
        corners.iter().all(|c| self.vertices.contains(c)).then_some(bb)
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn bounding_box(&self) -> Rect {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices[1..] {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        Rect { min, max }
    }

    /// Point-in-polygon by ray casting; boundary points count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            if on_segment(p, &self.vertices[i], &self.vertices[(i + 1) % n]) {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Strict interior test: boundary points are excluded.
    pub fn contains_strict(&self, p: &Point) -> bool {
        let n = self.vertices.len();
        if (0..n).any(|i| on_segment(p, &self.vertices[i], &self.vertices[(i + 1) % n])) {
            return false;
        }
        self.contains(p)
    }

    /// True if the open segment `a`-`b` passes through the polygon's interior
    /// or crosses one of its edges.
    pub fn blocks_segment(&self, a: &Point, b: &Point) -> bool {
        if self.contains_strict(a) || self.contains_strict(b) {
            return true;
        }
        let n = self.vertices.len();
        for i in 0..n {
            let c = self.vertices[i];
            let d = self.vertices[(i + 1) % n];
            if segments_cross(a, b, &c, &d) {
                return true;
            }
        }
        // A chord between two boundary points can still pass through the
        // interior without properly crossing an edge.
        self.contains_strict(&a.lerp(b, 0.5))
    }
}

fn orientation(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    const EPS: f64 = 1e-12;
    orientation(a, b, p).abs() <= EPS * (1.0 + a.distance(b))
        && p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

/// Proper crossing of segments `a`-`b` and `c`-`d` (touching endpoints do
/// not count).
fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::rectangle(Rect::from_corners(Point::new(0.0, 0.0), Point::new(1.0, 1.0)))
    }

    #[test]
    fn containment_includes_boundary() {
        let sq = unit_square();
        assert!(sq.contains(&Point::new(0.5, 0.5)));
        assert!(sq.contains(&Point::new(0.0, 0.5)));
        assert!(!sq.contains_strict(&Point::new(0.0, 0.5)));
        assert!(!sq.contains(&Point::new(1.5, 0.5)));
    }

    #[test]
    fn area_of_l_shape() {
        let l = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert!((l.area() - 3.0).abs() < 1e-12);
        assert!(!l.contains(&Point::new(1.5, 1.5)));
        assert!(l.as_rect().is_none());
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert!(Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_none());
        assert!(Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0)
        ])
        .is_none());
    }

    #[test]
    fn segment_blocking() {
        let sq = unit_square();
        assert!(sq.blocks_segment(&Point::new(-1.0, 0.5), &Point::new(2.0, 0.5)));
        assert!(!sq.blocks_segment(&Point::new(-1.0, 1.5), &Point::new(2.0, 1.5)));
        // grazing along an edge is not blocked
        assert!(!sq.blocks_segment(&Point::new(-1.0, 1.0), &Point::new(2.0, 1.0)));
        // corner to corner diagonal goes through the interior
        assert!(sq.blocks_segment(&Point::new(0.0, 0.0), &Point::new(1.0, 1.0)));
    }

    #[test]
    fn angles_wrap() {
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-12);
    }
}
