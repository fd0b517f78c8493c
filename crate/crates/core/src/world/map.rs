use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::geometry::{normalize_angle, Point, Polygon, Pose, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub shape: Polygon,
}

/// Room-annotated metric map with per-class room priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Rect,
    pub rooms: Vec<Room>,
    /// class -> [(room, mass)]; masses per class sum to at most one, the
    /// remainder is spread uniformly over free space.
    pub priors: BTreeMap<String, Vec<(String, f64)>>,
    pub obstacles: Vec<Polygon>,
}

/// Rejection sampling gives up after this many draws per sample.
const MAX_REJECTIONS: usize = 10_000;

impl WorldMap {
    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.name == name)
    }

    /// First room (in declaration order) containing `p`.
    pub fn room_at(&self, p: &Point) -> Option<&str> {
        self.rooms
            .iter()
            .find(|r| r.shape.contains(p))
            .map(|r| r.name.as_str())
    }

    pub fn in_obstacle(&self, p: &Point) -> bool {
        self.obstacles.iter().any(|o| o.contains_strict(p))
    }

    pub fn is_free(&self, p: &Point) -> bool {
        self.bounds.contains(p) && !self.in_obstacle(p)
    }

    pub fn line_of_sight(&self, a: &Point, b: &Point) -> bool {
        !self.obstacles.iter().any(|o| o.blocks_segment(a, b))
    }

    pub fn prior(&self, class: &str) -> &[(String, f64)] {
        self.priors.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn free_area(&self) -> f64 {
        // Obstacles are assumed not to overlap each other.
        let blocked: f64 = self.obstacles.iter().map(Polygon::area).sum();
        (self.bounds.area() - blocked).max(0.0)
    }

    pub fn sample_free<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Point> {
        sample_in(&self.bounds, rng, |p| self.is_free(p))
    }

    /// Uniform draw from the free part of a room.
    pub fn sample_in_room<R: Rng + ?Sized>(&self, room: &Room, rng: &mut R) -> Option<Point> {
        sample_in(&room.shape.bounding_box(), rng, |p| {
            room.shape.contains(p) && self.is_free(p)
        })
    }
}

fn sample_in<R: Rng + ?Sized>(area: &Rect, rng: &mut R, accept: impl Fn(&Point) -> bool) -> Option<Point> {
    for _ in 0..MAX_REJECTIONS {
        let p = Point::new(
            area.min.x + rng.random::<f64>() * area.width(),
            area.min.y + rng.random::<f64>() * area.height(),
        );
        if accept(&p) {
            return Some(p);
        }
    }
    None
}

/// Range- and bearing-limited detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range: f64,
    /// Full opening angle in radians.
    pub fov: f64,
    /// Standard deviation of position noise on detections, meters.
    pub noise: f64,
    pub miss_rate: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            range: 5.0,
            fov: 2.0 * PI / 3.0,
            noise: 0.15,
            miss_rate: 0.05,
        }
    }
}

impl SensorModel {
    /// Range and field-of-view test, ignoring occlusion.
    pub fn in_footprint(&self, viewpoint: &Pose, p: &Point) -> bool {
        let origin = viewpoint.position();
        let d = origin.distance(p);
        if d > self.range {
            return false;
        }
        if d == 0.0 {
            return true;
        }
        let off = normalize_angle(origin.bearing_to(p) - viewpoint.heading).abs();
        off <= self.fov / 2.0 + 1e-12
    }

    pub fn can_see(&self, map: &WorldMap, viewpoint: &Pose, p: &Point) -> bool {
        self.in_footprint(viewpoint, p) && map.line_of_sight(&viewpoint.position(), p)
    }
}
