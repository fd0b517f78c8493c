//! PNG rendering of particle snapshots over the map.

use std::path::Path;

use image::{Rgba, RgbaImage};

use crate::geometry::Point;
use crate::inference::ParticleSet;
use crate::world::{GroundTruthObject, WorldMap};

pub const PIXELS_PER_METER: f64 = 50.0;

const BACKGROUND: Rgba<u8> = Rgba([255, 255, 255, 255]);
const PRIOR_ROOM: Rgba<u8> = Rgba([236, 236, 222, 255]);
const PLAIN_ROOM: Rgba<u8> = Rgba([248, 248, 248, 255]);
const OUTLINE: Rgba<u8> = Rgba([40, 40, 40, 255]);
const OBSTACLE: Rgba<u8> = Rgba([90, 90, 90, 255]);
const MARKER: Rgba<u8> = Rgba([0, 0, 0, 255]);

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

struct Canvas<'a> {
    img: RgbaImage,
    map: &'a WorldMap,
}

impl Canvas<'_> {
    fn to_pixel(&self, p: &Point) -> (i64, i64) {
        let b = &self.map.bounds;
        let x = ((p.x - b.min.x) * PIXELS_PER_METER).floor() as i64;
        let y = ((b.max.y - p.y) * PIXELS_PER_METER).floor() as i64;
        (x, y)
    }

    fn to_world(&self, x: u32, y: u32) -> Point {
        let b = &self.map.bounds;
        Point::new(
            b.min.x + (x as f64 + 0.5) / PIXELS_PER_METER,
            b.max.y - (y as f64 + 0.5) / PIXELS_PER_METER,
        )
    }

    fn blend(&mut self, x: i64, y: i64, color: [u8; 3], alpha: f64) {
        if x < 0 || y < 0 || x >= self.img.width() as i64 || y >= self.img.height() as i64 {
            return;
        }
        let px = self.img.get_pixel_mut(x as u32, y as u32);
        for c in 0..3 {
            let v = alpha * color[c] as f64 + (1.0 - alpha) * px.0[c] as f64;
            px.0[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    fn square(&mut self, centre: &Point, half: i64, color: [u8; 3], alpha: f64) {
        let (cx, cy) = self.to_pixel(centre);
        for dy in -half..=half {
            for dx in -half..=half {
                self.blend(cx + dx, cy + dy, color, alpha);
            }
        }
    }
}

/// Map outline, rooms shaded where some class has a prior, obstacles,
/// ground-truth markers and particles. Particle alpha scales with weight
/// relative to the heaviest particle of its set; colors follow set order.
pub fn render_snapshot(map: &WorldMap, objects: &[GroundTruthObject], sets: &[ParticleSet]) -> RgbaImage {
    let w = (map.bounds.width() * PIXELS_PER_METER).ceil().max(1.0) as u32;
    let h = (map.bounds.height() * PIXELS_PER_METER).ceil().max(1.0) as u32;
    let mut canvas = Canvas {
        img: RgbaImage::from_pixel(w, h, BACKGROUND),
        map,
    };

    let with_prior: Vec<bool> = map
        .rooms
        .iter()
        .map(|r| {
            map.priors
                .values()
                .any(|rooms| rooms.iter().any(|(n, m)| *n == r.name && *m > 0.0))
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let p = canvas.to_world(x, y);
            let fill = if map.in_obstacle(&p) {
                Some(OBSTACLE)
            } else {
                map.rooms.iter().position(|r| r.shape.contains(&p)).map(|i| {
                    if with_prior[i] {
                        PRIOR_ROOM
                    } else {
                        PLAIN_ROOM
                    }
                })
            };
            if let Some(c) = fill {
                canvas.img.put_pixel(x, y, c);
            }
        }
    }
    for room in &map.rooms {
        let v = room.shape.vertices();
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let steps = (a.distance(&b) * PIXELS_PER_METER).ceil() as usize + 1;
            for s in 0..=steps {
                let p = a.lerp(&b, s as f64 / steps as f64);
                let (px, py) = canvas.to_pixel(&p);
                canvas.blend(
                    px.min(w as i64 - 1),
                    py.min(h as i64 - 1),
                    [OUTLINE.0[0], OUTLINE.0[1], OUTLINE.0[2]],
                    1.0,
                );
            }
        }
    }

    for (i, set) in sets.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let max = set.weights().iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            continue;
        }
        for (p, wt) in set.iter() {
            canvas.square(p, 1, color, (0.15 + 0.85 * wt / max).min(1.0));
        }
    }
    for obj in objects {
        if let Some(p) = obj.position() {
            canvas.square(&p, 4, [MARKER.0[0], MARKER.0[1], MARKER.0[2]], 1.0);
            canvas.square(&p, 2, [255, 255, 255], 1.0);
        }
    }
    canvas.img
}

pub fn save_png(img: &RgbaImage, path: &Path) -> Result<(), image::ImageError> {
    img.save_with_format(path, image::ImageFormat::Png)
}
