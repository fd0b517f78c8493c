//! Coarse occupancy grid over the map with A* search and string-pulling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::map::WorldMap;
use crate::geometry::Point;

#[derive(Debug, Clone)]
pub struct NavGrid {
    origin: Point,
    resolution: f64,
    cols: usize,
    rows: usize,
    free: Vec<bool>,
    /// Bit k set when the move NEIGHBOURS[k] out of the cell is clear.
    moves: Vec<u8>,
    /// Connected-component label per free cell.
    component: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, ties broken by cell index for determinism
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

impl NavGrid {
    pub fn new(map: &WorldMap, resolution: f64) -> Self {
        let cols = (map.bounds.width() / resolution).ceil().max(1.0) as usize;
        let rows = (map.bounds.height() / resolution).ceil().max(1.0) as usize;
        let origin = map.bounds.min;
        let mut free = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                let center = Point::new(
                    origin.x + (c as f64 + 0.5) * resolution,
                    origin.y + (r as f64 + 0.5) * resolution,
                );
                free[r * cols + c] = map.is_free(&center);
            }
        }
        let mut grid = NavGrid {
            origin,
            resolution,
            cols,
            rows,
            free,
            moves: vec![0; cols * rows],
            component: vec![u32::MAX; cols * rows],
        };
        grid.compute_moves(map);
        grid.label_components();
        grid
    }

    /// Obstacles thinner than a cell leave both sides free, so each move
    /// also needs a clear line between the two cell centres.
    fn compute_moves(&mut self, map: &WorldMap) {
        for cell in 0..self.free.len() {
            if !self.free[cell] {
                continue;
            }
            let here = self.center(cell);
            let mut mask = 0u8;
            for (k, n) in self.raw_neighbours(cell) {
                if map.line_of_sight(&here, &self.center(n)) {
                    mask |= 1 << k;
                }
            }
            self.moves[cell] = mask;
        }
    }

    fn label_components(&mut self) {
        let mut label = 0;
        for start in 0..self.free.len() {
            if !self.free[start] || self.component[start] != u32::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            self.component[start] = label;
            while let Some(cell) = queue.pop_front() {
                let next: Vec<usize> = self.neighbours(cell).collect();
                for n in next {
                    if self.component[n] == u32::MAX {
                        self.component[n] = label;
                        queue.push_back(n);
                    }
                }
            }
            label += 1;
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    fn cell_of(&self, p: &Point) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (c, r) = ((c as usize).min(self.cols - 1), (r as usize).min(self.rows - 1));
        Some(r * self.cols + c)
    }

    fn center(&self, cell: usize) -> Point {
        let (r, c) = (cell / self.cols, cell % self.cols);
        Point::new(
            self.origin.x + (c as f64 + 0.5) * self.resolution,
            self.origin.y + (r as f64 + 0.5) * self.resolution,
        )
    }

    fn raw_neighbours(&self, cell: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (r, c) = ((cell / self.cols) as i64, (cell % self.cols) as i64);
        NEIGHBOURS.iter().enumerate().filter_map(move |(k, &(dc, dr))| {
            let (nc, nr) = (c + dc, r + dr);
            if nc < 0 || nr < 0 || nc >= self.cols as i64 || nr >= self.rows as i64 {
                return None;
            }
            let n = nr as usize * self.cols + nc as usize;
            if !self.free[n] {
                return None;
            }
            // no corner cutting on diagonals
            if dc != 0 && dr != 0 {
                let side_a = r as usize * self.cols + nc as usize;
                let side_b = nr as usize * self.cols + c as usize;
                if !self.free[side_a] || !self.free[side_b] {
                    return None;
                }
            }
            Some((k, n))
        })
    }

    fn neighbours(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.moves[cell];
        self.raw_neighbours(cell)
            .filter(move |&(k, _)| mask & (1 << k) != 0)
            .map(|(_, n)| n)
    }

    /// Free cell used to enter the grid from `p`: its own cell when free,
    /// else the nearest free cell with a clear line to `p`.
    fn anchor(&self, map: &WorldMap, p: &Point) -> Option<usize> {
        if let Some(cell) = self.cell_of(p) {
            if self.free[cell] {
                return Some(cell);
            }
        }
        (0..self.free.len())
            .filter(|&c| self.free[c])
            .map(|c| (c, self.center(c).distance_sq(p)))
            .filter(|(c, d)| *d <= (3.0 * self.resolution).powi(2) && map.line_of_sight(&self.center(*c), p))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(c, _)| c)
    }

    /// Cheap reachability test between two free points.
    pub fn connected(&self, map: &WorldMap, a: &Point, b: &Point) -> bool {
        match (self.anchor(map, a), self.anchor(map, b)) {
            (Some(x), Some(y)) => self.component[x] == self.component[y],
            _ => false,
        }
    }

    /// Obstacle-free polyline from `start` to `goal`, both included.
    pub fn plan(&self, map: &WorldMap, start: &Point, goal: &Point) -> Option<Vec<Point>> {
        if !map.is_free(goal) || !map.is_free(start) {
            return None;
        }
        if map.line_of_sight(start, goal) {
            return Some(vec![*start, *goal]);
        }
        let s = self.anchor(map, start)?;
        let g = self.anchor(map, goal)?;
        if self.component[s] != self.component[g] {
            return None;
        }
        let cells = self.astar(s, g)?;
        let mut raw = Vec::with_capacity(cells.len() + 2);
        raw.push(*start);
        raw.extend(cells.into_iter().map(|c| self.center(c)));
        raw.push(*goal);
        Some(smooth(map, &raw))
    }

    fn astar(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        let n = self.free.len();
        let mut g = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let goal_p = self.center(goal);
        let h = |c: usize| self.center(c).distance(&goal_p);
        let mut open = BinaryHeap::new();
        g[start] = 0.0;
        open.push(Open {
            f: h(start),
            cell: start,
        });
        while let Some(Open { cell, .. }) = open.pop() {
            if cell == goal {
                let mut path = vec![goal];
                let mut cur = goal;
                while cur != start {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            if closed[cell] {
                continue;
            }
            closed[cell] = true;
            let here = self.center(cell);
            for nb in self.neighbours(cell) {
                let cost = g[cell] + here.distance(&self.center(nb));
                if cost < g[nb] {
                    g[nb] = cost;
                    parent[nb] = cell;
                    open.push(Open {
                        f: cost + h(nb),
                        cell: nb,
                    });
                }
            }
        }
        None
    }
}

/// Greedy string-pulling: from each kept vertex jump to the farthest vertex
/// still in line of sight.
fn smooth(map: &WorldMap, raw: &[Point]) -> Vec<Point> {
    let mut out = vec![raw[0]];
    let mut i = 0;
    while i < raw.len() - 1 {
        let mut j = raw.len() - 1;
        while j > i + 1 && !map.line_of_sight(&raw[i], &raw[j]) {
            j -= 1;
        }
        out.push(raw[j]);
        i = j;
    }
    out
}

pub fn path_length(path: &[Point]) -> f64 {
    path.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Point at arc length `s` along the polyline, with the heading of the
/// segment it lies on.
pub fn point_along(path: &[Point], s: f64) -> (Point, f64) {
    let mut remaining = s.max(0.0);
    for w in path.windows(2) {
        let len = w[0].distance(&w[1]);
        if remaining <= len && len > 0.0 {
            return (w[0].lerp(&w[1], remaining / len), w[0].bearing_to(&w[1]));
        }
        remaining -= len;
    }
    let last = *path.last().expect("non-empty path");
    let heading = path
        .windows(2)
        .rev()
        .find(|w| w[0] != w[1])
        .map(|w| w[0].bearing_to(&w[1]))
        .unwrap_or(0.0);
    (last, heading)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, Rect};
    use std::collections::BTreeMap;

    fn walled() -> WorldMap {
        // a wall across the middle with a gap at the top
        WorldMap {
            bounds: Rect::from_corners(Point::new(0.0, 0.0), Point::new(10.0, 10.0)),
            rooms: vec![],
            priors: BTreeMap::new(),
            obstacles: vec![Polygon::rectangle(Rect::from_corners(
                Point::new(4.9, 0.0),
                Point::new(5.1, 8.0),
            ))],
        }
    }

    #[test]
    fn straight_line_in_open_space() {
        let m = walled();
        let g = NavGrid::new(&m, 0.25);
        let p = g.plan(&m, &Point::new(1.0, 1.0), &Point::new(3.0, 4.0)).unwrap();
        assert_eq!(p.len(), 2);
        assert!((path_length(&p) - (4.0f64 + 9.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn routes_around_wall() {
        let m = walled();
        let g = NavGrid::new(&m, 0.25);
        let start = Point::new(2.0, 2.0);
        let goal = Point::new(8.0, 2.0);
        let p = g.plan(&m, &start, &goal).unwrap();
        assert!(p.len() > 2);
        for w in p.windows(2) {
            assert!(m.line_of_sight(&w[0], &w[1]), "segment {w:?} crosses the wall");
        }
        // must go over the top of the wall (y > 8)
        assert!(p.iter().any(|q| q.y > 8.0));
        assert!(path_length(&p) > 12.0);
    }

    #[test]
    fn unreachable_targets() {
        let mut m = walled();
        let g = NavGrid::new(&m, 0.25);
        assert!(g.plan(&m, &Point::new(1.0, 1.0), &Point::new(5.0, 4.0)).is_none());
        // close the gap: now the two halves are disconnected
        m.obstacles.push(Polygon::rectangle(Rect::from_corners(
            Point::new(4.9, 8.0),
            Point::new(5.1, 10.0),
        )));
        let g = NavGrid::new(&m, 0.25);
        assert!(!g.connected(&m, &Point::new(1.0, 1.0), &Point::new(8.0, 1.0)));
        assert!(g.plan(&m, &Point::new(1.0, 1.0), &Point::new(8.0, 1.0)).is_none());
    }

    #[test]
    fn interpolation_along_path() {
        let path = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 2.0)];
        let (p, h) = point_along(&path, 3.0);
        assert_eq!(p, Point::new(2.0, 1.0));
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let (end, _) = point_along(&path, 10.0);
        assert_eq!(end, Point::new(2.0, 2.0));
    }
}
