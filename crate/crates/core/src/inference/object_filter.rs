//! Room-prior object location filter: Gaussian likelihood around each
//! detection of the class, miss-rate discount for particles the sensor saw
//! without detecting anything.

use rand_distr::{Distribution, Normal};

use super::particles::{
    effective_sample_size, init_particles_from_prior, reinvigorate_with, resample_with, ParticleSet,
};
use super::potentials::PotentialParams;
use super::UpdateEvent;
use crate::geometry::Point;
use crate::rng;
use crate::world::{Observation, SensorModel, WorldMap};

/// Keeps a single noisy detection from annihilating every weight.
pub const EPSILON_FLOOR: f64 = 1e-6;

const OBJECT_STREAM: u64 = 20;

/// Jitter applied to resampled particles after a detection, as a fraction
/// of the sensor noise. Without it the duplicates of whichever particle
/// happened to lie nearest the object could never move closer.
const ROUGHENING: f64 = 0.5;

fn roughen(set: &ParticleSet, map: &WorldMap, sigma: f64, rng: &mut rng::SimRng) -> ParticleSet {
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let positions = set
        .positions()
        .iter()
        .map(|p| {
            let q = Point::new(p.x + normal.sample(rng), p.y + normal.sample(rng));
            if map.is_free(&q) {
                q
            } else {
                *p
            }
        })
        .collect();
    ParticleSet::new(set.owner(), positions, set.weights().to_vec()).expect("weights already normalized")
}

pub fn update_object_filter(
    set: &ParticleSet,
    observation: &Observation,
    map: &WorldMap,
    sensor: &SensorModel,
    params: &PotentialParams,
    seed: u64,
) -> (ParticleSet, UpdateEvent) {
    let class = set.owner();
    let mut rng = rng::stream(rng::mix(seed, rng::tag(class)), OBJECT_STREAM);
    let mut event = UpdateEvent::new(class);
    let mut weights = set.weights().to_vec();
    let detections: Vec<_> = observation.detections_of(class).collect();
    if detections.is_empty() {
        let view = SensorModel {
            range: observation.range,
            fov: observation.fov,
            ..*sensor
        };
        for (w, p) in weights.iter_mut().zip(set.positions()) {
            if view.can_see(map, &observation.viewpoint, p) {
                *w *= sensor.miss_rate;
            }
        }
    } else {
        let var = sensor.noise * sensor.noise;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var);
        for d in &detections {
            for (w, p) in weights.iter_mut().zip(set.positions()) {
                *w *= norm * (-p.distance_sq(&d.position) / (2.0 * var)).exp() + EPSILON_FLOOR;
            }
        }
    }

    let mut out = set.clone();
    if !out.set_weights(weights) {
        event.degenerate = true;
        out = init_particles_from_prior(map, class, set.len(), rng::mix(seed, 1))
            .unwrap_or_else(|_| set.clone());
    }
    let ess = effective_sample_size(&out);
    if ess / (out.len() as f64) < params.ess_threshold {
        out = resample_with(&out, &mut rng);
        if !detections.is_empty() {
            out = roughen(&out, map, ROUGHENING * sensor.noise, &mut rng);
        }
        out = reinvigorate_with(&out, map, params.reinvigoration_fraction, &mut rng);
        event.resampled = true;
        event.reinvigorated =
            super::particles::reinvigoration_count(out.len(), params.reinvigoration_fraction);
    }
    event.ess = ess;
    (out, event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Polygon, Pose, Rect};
    use crate::world::{Detection, Room};
    use std::collections::BTreeMap;

    fn kitchen_map() -> WorldMap {
        WorldMap {
            bounds: Rect::from_corners(Point::new(0.0, 0.0), Point::new(12.0, 6.0)),
            rooms: vec![Room {
                name: "kitchen".into(),
                shape: Polygon::rectangle(Rect::from_corners(Point::new(0.0, 0.0), Point::new(4.0, 6.0))),
            }],
            priors: BTreeMap::from([("spoon".to_string(), vec![("kitchen".to_string(), 0.8)])]),
            obstacles: vec![],
        }
    }

    fn empty_view(pose: Pose) -> Observation {
        Observation {
            detections: vec![],
            viewpoint: pose,
            range: 5.0,
            fov: 2.0 * std::f64::consts::PI / 3.0,
        }
    }

    #[test]
    fn far_empty_view_changes_nothing() {
        let map = kitchen_map();
        let set = init_particles_from_prior(&map, "spoon", 200, 2).unwrap();
        // at the east wall, looking out of the map
        let obs = empty_view(Pose::new(12.0, 3.0, 0.0));
        let (out, ev) =
            update_object_filter(&set, &obs, &map, &SensorModel::default(), &Default::default(), 1);
        assert_eq!(out.positions(), set.positions());
        assert!(out
            .weights()
            .iter()
            .zip(set.weights())
            .all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(!ev.degenerate && !ev.resampled);
    }

    #[test]
    fn repeated_negative_views_drain_kitchen() {
        let map = kitchen_map();
        let mut set = init_particles_from_prior(&map, "spoon", 200, 2).unwrap();
        let obs = empty_view(Pose::new(0.1, 3.0, 0.0));
        let kitchen = |s: &ParticleSet| s.mass_by_room(&map)["kitchen"];
        // no resampling, so the drain is the pure miss-rate factor
        let params = PotentialParams {
            ess_threshold: 0.0,
            ..Default::default()
        };
        let mut last = kitchen(&set);
        for i in 0..5 {
            let (next, _) = update_object_filter(&set, &obs, &map, &SensorModel::default(), &params, i);
            let now = kitchen(&next);
            assert!(now < last, "view {i}: {now} !< {last}");
            last = now;
            set = next;
        }
    }

    #[test]
    fn detection_concentrates_mass() {
        let map = kitchen_map();
        let set = init_particles_from_prior(&map, "spoon", 200, 5).unwrap();
        let truth = Point::new(2.0, 3.0);
        let obs = Observation {
            detections: vec![Detection {
                class: "spoon".into(),
                position: truth,
                confidence: 1.0,
            }],
            ..empty_view(Pose::new(6.0, 3.0, std::f64::consts::PI))
        };
        let sensor = SensorModel::default();
        let params = PotentialParams {
            ess_threshold: 0.0,
            ..Default::default()
        };
        let (out, _) = update_object_filter(&set, &obs, &map, &sensor, &params, 1);
        assert!(out.mass_within(&truth, 3.0 * sensor.noise) > 0.7);
    }

    #[test]
    fn impossible_evidence_resets_to_prior() {
        let map = kitchen_map();
        let set = ParticleSet::uniform("spoon", vec![Point::new(2.0, 3.0)]).unwrap();
        let sensor = SensorModel {
            miss_rate: 0.0,
            ..Default::default()
        };
        let obs = empty_view(Pose::new(0.5, 3.0, 0.0));
        let (out, ev) = update_object_filter(&set, &obs, &map, &sensor, &Default::default(), 3);
        assert!(ev.degenerate);
        assert_eq!(out.len(), 1);
        assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
