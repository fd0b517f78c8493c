use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::InferenceError;
use crate::geometry::Point;
use crate::rng;
use crate::world::WorldMap;

/// Room label for mass lying outside every room polygon.
pub const BACKGROUND: &str = "background";

const INIT_STREAM: u64 = 10;
const RESAMPLE_STREAM: u64 = 11;
const REINVIGORATE_STREAM: u64 = 12;

/// Weighted sample approximation of a belief over 2D positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    owner: String,
    positions: Vec<Point>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Validates lengths, normalization and non-negativity.
    pub fn new(
        owner: impl Into<String>,
        positions: Vec<Point>,
        weights: Vec<f64>,
    ) -> Result<Self, InferenceError> {
        if positions.is_empty() {
            return Err(InferenceError::EmptySet);
        }
        if positions.len() != weights.len() {
            return Err(InferenceError::InvalidWeights(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(InferenceError::InvalidWeights(
                "negative or non-finite weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(InferenceError::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(ParticleSet {
            owner: owner.into(),
            positions,
            weights,
        })
    }

    /// Equal weights over `positions`.
    pub fn uniform(owner: impl Into<String>, positions: Vec<Point>) -> Result<Self, InferenceError> {
        if positions.is_empty() {
            return Err(InferenceError::EmptySet);
        }
        let w = 1.0 / positions.len() as f64;
        let weights = vec![w; positions.len()];
        Ok(ParticleSet {
            owner: owner.into(),
            positions,
            weights,
        })
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// Always false: a set holds at least one particle.
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.positions.iter().zip(self.weights.iter().copied())
    }

    /// Replaces the weights, renormalizing. Returns false (and leaves the
    /// set untouched) when they carry no usable mass.
    pub fn set_weights(&mut self, mut weights: Vec<f64>) -> bool {
        assert_eq!(weights.len(), self.positions.len());
        if !normalize(&mut weights) {
            return false;
        }
        self.weights = weights;
        true
    }

    pub fn reset_weights(&mut self) {
        let w = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|x| *x = w);
    }

    /// Distinct positions with their summed weight, zero-weight entries
    /// dropped. Resampled sets repeat positions heavily, so kernel sums
    /// over the support are much cheaper than over the raw particles.
    pub fn support(&self) -> Vec<(Point, f64)> {
        let mut entries: Vec<(Point, f64)> = self
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (*p, w))
            .collect();
        entries.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
        let mut out: Vec<(Point, f64)> = Vec::with_capacity(entries.len());
        for (p, w) in entries {
            match out.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => out.push((p, w)),
            }
        }
        out
    }

    pub fn mean(&self) -> Point {
        let (x, y) = self
            .iter()
            .fold((0.0, 0.0), |(x, y), (p, w)| (x + w * p.x, y + w * p.y));
        Point::new(x, y)
    }

    pub fn mass_where(&self, pred: impl Fn(&Point) -> bool) -> f64 {
        self.iter().filter(|(p, _)| pred(p)).map(|(_, w)| w).sum()
    }

    pub fn mass_within(&self, center: &Point, radius: f64) -> f64 {
        let r2 = radius * radius;
        self.mass_where(|p| p.distance_sq(center) <= r2)
    }

    /// Mass per room, with unassigned particles under [`BACKGROUND`].
    /// Every room of the map appears, possibly with zero mass.
    pub fn mass_by_room(&self, map: &WorldMap) -> BTreeMap<String, f64> {
        let mut table: BTreeMap<String, f64> = map.rooms.iter().map(|r| (r.name.clone(), 0.0)).collect();
        table.insert(BACKGROUND.to_string(), 0.0);
        for (p, w) in self.iter() {
            let room = map.room_at(p).unwrap_or(BACKGROUND);
            *table.get_mut(room).expect("every room is keyed") += w;
        }
        table
    }
}

/// Scales `weights` to sum to one. False when the total is zero or not
/// finite.
pub(crate) fn normalize(weights: &mut [f64]) -> bool {
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return false;
    }
    weights.iter_mut().for_each(|w| *w /= total);
    true
}

/// Room-prior initialization for an object class. Each particle lands in a
/// prior room with that room's mass, otherwise uniformly in free space. A
/// class without a prior (and every frame) is uniform over free space.
pub fn init_particles_from_prior(
    map: &WorldMap,
    owner: &str,
    count: usize,
    seed: u64,
) -> Result<ParticleSet, InferenceError> {
    if count == 0 {
        return Err(InferenceError::EmptySet);
    }
    let mut rng = rng::stream(rng::mix(seed, rng::tag(owner)), INIT_STREAM);
    let prior: Vec<_> = map
        .prior(owner)
        .iter()
        .filter_map(|(room, mass)| map.room(room).map(|r| (r, *mass)))
        .collect();
    let mut positions = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u: f64 = rng.random();
        let mut drawn = None;
        for (room, mass) in &prior {
            if u < *mass {
                drawn = map.sample_in_room(room, &mut rng);
                break;
            }
            u -= mass;
        }
        let p = match drawn {
            Some(p) => p,
            None => map.sample_free(&mut rng).ok_or(InferenceError::EmptyFreeSpace)?,
        };
        positions.push(p);
    }
    ParticleSet::uniform(owner, positions)
}

/// Low-variance (systematic) resampling; output weights are uniform.
pub fn resample(set: &ParticleSet, seed: u64) -> ParticleSet {
    let mut rng = rng::stream(seed, RESAMPLE_STREAM);
    resample_with(set, &mut rng)
}

pub(crate) fn resample_with<R: Rng + ?Sized>(set: &ParticleSet, rng: &mut R) -> ParticleSet {
    let n = set.len();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut positions = Vec::with_capacity(n);
    let mut cumulative = set.weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u > cumulative && i + 1 < n {
            i += 1;
            cumulative += set.weights[i];
        }
        positions.push(set.positions[i]);
        u += step;
    }
    ParticleSet {
        owner: set.owner.clone(),
        positions,
        weights: vec![step; n],
    }
}

pub fn effective_sample_size(set: &ParticleSet) -> f64 {
    1.0 / set.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Number of particles `reinvigorate` replaces for a given fraction.
pub fn reinvigoration_count(len: usize, fraction: f64) -> usize {
    // guard against 0.05 * 200 landing a hair above 10
    ((fraction * len as f64 - 1e-9).ceil().max(0.0) as usize).min(len)
}

/// Replaces the lowest-weight particles with uniform free-space draws at
/// weight 1/P, then renormalizes. Ties go to the lower index.
pub fn reinvigorate(set: &ParticleSet, map: &WorldMap, fraction: f64, seed: u64) -> ParticleSet {
    let mut rng = rng::stream(seed, REINVIGORATE_STREAM);
    reinvigorate_with(set, map, fraction, &mut rng)
}

pub(crate) fn reinvigorate_with<R: Rng + ?Sized>(
    set: &ParticleSet,
    map: &WorldMap,
    fraction: f64,
    rng: &mut R,
) -> ParticleSet {
    let n = set.len();
    let k = reinvigoration_count(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.weights[a].total_cmp(&set.weights[b]).then(a.cmp(&b)));
    let mut out = set.clone();
    let fresh = 1.0 / n as f64;
    for &i in &order[..k] {
        if let Some(p) = map.sample_free(rng) {
            out.positions[i] = p;
            out.weights[i] = fresh;
        }
    }
    normalize(&mut out.weights);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, Rect};
    use crate::world::Room;

    pub(crate) fn two_rooms() -> WorldMap {
        let rect = |a: f64, b: f64, c: f64, d: f64| {
            Polygon::rectangle(Rect::from_corners(Point::new(a, b), Point::new(c, d)))
        };
        WorldMap {
            bounds: Rect::from_corners(Point::new(0.0, 0.0), Point::new(10.0, 5.0)),
            rooms: vec![
                Room {
                    name: "kitchen".into(),
                    shape: rect(0.0, 0.0, 4.0, 5.0),
                },
                Room {
                    name: "hall".into(),
                    shape: rect(4.0, 0.0, 8.0, 5.0),
                },
            ],
            priors: BTreeMap::from([("spoon".to_string(), vec![("kitchen".to_string(), 0.8)])]),
            obstacles: vec![],
        }
    }

    #[test]
    fn prior_initialization() {
        let map = two_rooms();
        let set = init_particles_from_prior(&map, "spoon", 200, 3).unwrap();
        assert_eq!(set.len(), 200);
        assert!(set.weights().iter().all(|&w| w == 0.005));
        // 0.8 directly plus 0.2 * 20/50 from the uniform remainder
        let kitchen = set.mass_by_room(&map)["kitchen"];
        assert!(
            (kitchen - 0.88).abs() < 3.0 * (0.88f64 * 0.12 / 200.0).sqrt(),
            "{kitchen}"
        );
        let one = init_particles_from_prior(&map, "spoon", 1, 3).unwrap();
        assert_eq!(one.weights(), [1.0]);
        assert!(matches!(
            init_particles_from_prior(&map, "spoon", 0, 3),
            Err(InferenceError::EmptySet)
        ));
    }

    #[test]
    fn no_prior_is_uniform() {
        let map = two_rooms();
        let set = init_particles_from_prior(&map, "stir_cup", 4000, 9).unwrap();
        let table = set.mass_by_room(&map);
        assert!((table["kitchen"] - 0.4).abs() < 0.03);
        assert!((table["hall"] - 0.4).abs() < 0.03);
        assert!((table[BACKGROUND] - 0.2).abs() < 0.03);
    }

    #[test]
    fn point_mass_resamples_to_one_location() {
        let mut w = vec![0.0; 50];
        w[0] = 1.0;
        let positions = (0..50).map(|i| Point::new(i as f64 * 0.1, 1.0)).collect();
        let set = ParticleSet::new("x", positions, w).unwrap();
        let r = resample(&set, 4);
        assert!(r.positions().iter().all(|p| *p == Point::new(0.0, 1.0)));
        assert_eq!(effective_sample_size(&set), 1.0);
        assert!((effective_sample_size(&r) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn reinvigoration_replaces_exact_count() {
        let map = two_rooms();
        let set = init_particles_from_prior(&map, "spoon", 200, 1).unwrap();
        let mut weights: Vec<f64> = (0..200).map(|i| (i + 1) as f64).collect();
        normalize(&mut weights);
        let set = ParticleSet::new("spoon", set.positions().to_vec(), weights).unwrap();
        let out = reinvigorate(&set, &map, 0.05, 7);
        let changed = set
            .positions()
            .iter()
            .zip(out.positions())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 10);
        assert_eq!(reinvigoration_count(200, 0.05), 10);
        // the ten lightest were the first ten
        assert!(set.positions()[10..] == out.positions()[10..]);
        assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_sets_rejected() {
        let p = vec![Point::new(0.0, 0.0); 2];
        assert!(ParticleSet::new("x", p.clone(), vec![0.5]).is_err());
        assert!(ParticleSet::new("x", p.clone(), vec![0.7, 0.7]).is_err());
        assert!(ParticleSet::new("x", p, vec![1.5, -0.5]).is_err());
        assert!(ParticleSet::uniform("x", vec![]).is_err());
    }
}
