use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::frame_filter::{update_frame_filter, FrameModel, FrameSets, ObjectSets};
use super::object_filter::update_object_filter;
use super::particles::{effective_sample_size, init_particles_from_prior, ParticleSet};
use super::{InferenceError, UpdateEvent};
use crate::frames::FrameLibrary;
use crate::geometry::Point;
use crate::rng;
use crate::state::RobotState;
use crate::world::{Observation, SensorModel, WorldMap};

/// Compact per-set summary kept in every trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub owner: String,
    pub mean: Point,
    pub ess: f64,
}

/// All particle sets of one trial plus the latest detection per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beliefs {
    pub objects: ObjectSets,
    pub frames: FrameSets,
    pub last_detection: BTreeMap<String, Point>,
}

impl Beliefs {
    /// Object sets from room priors, frame sets uniform over free space.
    pub fn new(
        map: &WorldMap,
        frame_ids: &[String],
        object_classes: &[String],
        particles: usize,
        seed: u64,
    ) -> Result<Self, InferenceError> {
        let mut objects = ObjectSets::new();
        for class in object_classes {
            objects.insert(
                class.clone(),
                init_particles_from_prior(map, class, particles, seed)?,
            );
        }
        let mut frames = FrameSets::new();
        for id in frame_ids {
            frames.insert(id.clone(), init_particles_from_prior(map, id, particles, seed)?);
        }
        Ok(Beliefs {
            objects,
            frames,
            last_detection: BTreeMap::new(),
        })
    }

    /// Tracks the task frame, its precondition closure and every object
    /// class those frames mention.
    pub fn for_task(
        map: &WorldMap,
        library: &FrameLibrary,
        task: &str,
        particles: usize,
        seed: u64,
    ) -> Result<Self, InferenceError> {
        let frames = library.closure(task);
        let classes: BTreeSet<String> = frames
            .iter()
            .filter_map(|id| library.get(id))
            .flat_map(|f| f.elements.iter().map(|e| e.object_class.clone()))
            .collect();
        let classes: Vec<String> = classes.into_iter().collect();
        Beliefs::new(map, &frames, &classes, particles, seed)
    }

    /// Object filters only. Remembers the most confident detection of each
    /// class.
    pub fn observe(
        &mut self,
        observation: &Observation,
        map: &WorldMap,
        sensor: &SensorModel,
        model: &FrameModel<'_>,
        seed: u64,
    ) -> Vec<UpdateEvent> {
        let mut best: BTreeMap<&str, (f64, Point)> = BTreeMap::new();
        for d in &observation.detections {
            let entry = best
                .entry(d.class.as_str())
                .or_insert((f64::NEG_INFINITY, d.position));
            if d.confidence > entry.0 {
                *entry = (d.confidence, d.position);
            }
        }
        for (class, (_, p)) in best {
            self.last_detection.insert(class.to_string(), p);
        }
        let mut events = Vec::new();
        for set in self.objects.values_mut() {
            let (next, ev) = update_object_filter(set, observation, map, sensor, &model.params, seed);
            *set = next;
            events.push(ev);
        }
        events
    }

    /// One full timestep: every observation through the object filters,
    /// then a single frame update.
    pub fn step(
        &mut self,
        observations: &[Observation],
        state: &RobotState,
        sensor: &SensorModel,
        model: &FrameModel<'_>,
        seed: u64,
    ) -> Vec<UpdateEvent> {
        let mut events = Vec::new();
        for (i, obs) in observations.iter().enumerate() {
            events.extend(self.observe(obs, model.map, sensor, model, rng::mix(seed, i as u64 + 1)));
        }
        let (frames, frame_events) = update_frame_filter(&self.frames, &self.objects, state, model, seed);
        self.frames = frames;
        events.extend(frame_events);
        events
    }

    /// Posterior estimate of `class` once at least `mass` of its belief lies
    /// within `radius` of the last detection: the weighted mean of that
    /// mass.
    pub fn confident_estimate(&self, class: &str, mass: f64, radius: f64) -> Option<Point> {
        let det = self.last_detection.get(class)?;
        let set = self.objects.get(class)?;
        let r2 = radius * radius;
        let (mut m, mut x, mut y) = (0.0, 0.0, 0.0);
        for (p, w) in set.iter() {
            if p.distance_sq(det) <= r2 {
                m += w;
                x += w * p.x;
                y += w * p.y;
            }
        }
        (m >= mass && m > 0.0).then(|| Point::new(x / m, y / m))
    }

    pub fn forget_detection(&mut self, class: &str) {
        self.last_detection.remove(class);
    }

    pub fn sets(&self) -> impl Iterator<Item = &ParticleSet> {
        self.objects.values().chain(self.frames.values())
    }

    pub fn summary(&self) -> Vec<BeliefSummary> {
        self.sets()
            .map(|s| BeliefSummary {
                owner: s.owner().to_string(),
                mean: s.mean(),
                ess: effective_sample_size(s),
            })
            .collect()
    }
}
