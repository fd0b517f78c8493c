use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::particles::{
    effective_sample_size, init_particles_from_prior, reinvigorate_with, reinvigoration_count, resample_with,
    ParticleSet,
};
use super::potentials::{log_context_factor, log_measurement_factor, Kernel, PotentialParams};
use super::UpdateEvent;
use crate::frames::{FrameLibrary, Permanence, Role, SemanticFrame};
use crate::geometry::Point;
use crate::rng;
use crate::state::RobotState;
use crate::world::WorldMap;

const PREDICT_STREAM: u64 = 30;
const FRAME_STREAM: u64 = 31;

/// Draws per particle before a movable prediction gives up and stays put.
const PREDICT_TRIES: usize = 8;

/// Everything a frame update needs besides the particle sets.
#[derive(Debug, Clone, Copy)]
pub struct FrameModel<'a> {
    pub library: &'a FrameLibrary,
    pub map: &'a WorldMap,
    pub params: PotentialParams,
    /// Pose-level reasoning: Core objects are convolved with a ring of this
    /// radius, so frames sit where the robot can reach the object from.
    pub pose_reach: Option<f64>,
}

/// Frame sets keyed by frame id.
pub type FrameSets = BTreeMap<String, ParticleSet>;
/// Object sets keyed by class.
pub type ObjectSets = BTreeMap<String, ParticleSet>;

fn prediction_sigma(frame: &SemanticFrame, params: &PotentialParams) -> Option<f64> {
    match frame.permanence {
        Permanence::Static => None,
        Permanence::Movable { sigma } => Some(sigma.unwrap_or(params.sigma_p_movable)),
    }
}

/// Temporal step: identity for static frames, Gaussian diffusion kept in
/// free space for movable ones. Weights are unchanged.
pub fn predict_frame(
    set: &ParticleSet,
    frame: &SemanticFrame,
    map: &WorldMap,
    params: &PotentialParams,
    seed: u64,
) -> ParticleSet {
    let mut rng = rng::stream(seed, PREDICT_STREAM);
    predict_with(set, prediction_sigma(frame, params), map, &mut rng)
}

fn predict_with<R: Rng + ?Sized>(
    set: &ParticleSet,
    sigma: Option<f64>,
    map: &WorldMap,
    rng: &mut R,
) -> ParticleSet {
    let Some(sigma) = sigma.filter(|s| *s > 0.0) else {
        return set.clone();
    };
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let positions = set
        .positions()
        .iter()
        .map(|p| {
            for _ in 0..PREDICT_TRIES {
                let q = Point::new(p.x + noise.sample(rng), p.y + noise.sample(rng));
                if map.is_free(&q) {
                    return q;
                }
            }
            *p
        })
        .collect();
    ParticleSet::new(set.owner(), positions, set.weights().to_vec()).expect("weights unchanged")
}

/// Neighbours of a frame that enter its weight product.
enum Factor<'a> {
    Object {
        support: &'a [(Point, f64)],
        kernel: Kernel,
        belief: crate::frames::ElementBelief,
    },
    Context {
        support: &'a [(Point, f64)],
        belief: crate::frames::PreconditionBelief,
    },
}

/// One weighted update over every tracked frame. Object sets must already hold
/// this step's posterior; context factors read `frame_sets` as given, so
/// the result does not depend on frame order.
pub fn update_frame_filter(
    frame_sets: &FrameSets,
    object_sets: &ObjectSets,
    state: &RobotState,
    model: &FrameModel<'_>,
    seed: u64,
) -> (FrameSets, Vec<UpdateEvent>) {
    let object_support: BTreeMap<&str, Vec<(Point, f64)>> = object_sets
        .iter()
        .map(|(k, s)| (k.as_str(), s.support()))
        .collect();
    let frame_support: BTreeMap<&str, Vec<(Point, f64)>> = frame_sets
        .iter()
        .map(|(k, s)| (k.as_str(), s.support()))
        .collect();

    let mut out = FrameSets::new();
    let mut events = Vec::with_capacity(frame_sets.len());
    for (id, prev) in frame_sets {
        let Some(frame) = model.library.get(id) else {
            out.insert(id.clone(), prev.clone());
            continue;
        };
        let factors = neighbours(frame, state, model, &object_support, &frame_support);
        let frame_seed = rng::mix(seed, rng::tag(id));
        let (set, event) = update_one(prev, frame, &factors, model, frame_seed);
        out.insert(id.clone(), set);
        events.push(event);
    }
    (out, events)
}

fn neighbours<'a>(
    frame: &SemanticFrame,
    state: &RobotState,
    model: &FrameModel<'_>,
    object_support: &'a BTreeMap<&str, Vec<(Point, f64)>>,
    frame_support: &'a BTreeMap<&str, Vec<(Point, f64)>>,
) -> Vec<Factor<'a>> {
    let lib = model.library;
    let sigma = model.params.sigma_m;
    let mut factors = Vec::new();
    for element in &frame.elements {
        let belief = lib.relation_belief(frame, &element.object_class, state);
        if belief.is_disjoint() {
            continue;
        }
        let Some(support) = object_support.get(element.object_class.as_str()) else {
            continue;
        };
        let kernel = match model.pose_reach {
            Some(radius) if belief.weight(Role::Core) > 0.0 => Kernel::Ring { sigma, radius },
            _ => Kernel::Gaussian { sigma },
        };
        factors.push(Factor::Object {
            support,
            kernel,
            belief,
        });
    }
    for other in lib.frames() {
        let belief = lib.frame_relation_belief(frame, other, state);
        if belief.is_disjoint() {
            continue;
        }
        if let Some(support) = frame_support.get(other.id.as_str()) {
            factors.push(Factor::Context { support, belief });
        }
    }
    factors
}

fn update_one(
    prev: &ParticleSet,
    frame: &SemanticFrame,
    factors: &[Factor<'_>],
    model: &FrameModel<'_>,
    seed: u64,
) -> (ParticleSet, UpdateEvent) {
    let mut rng = rng::stream(seed, FRAME_STREAM);
    let mut event = UpdateEvent::new(&frame.id);
    let resampled = resample_with(prev, &mut rng);
    let mut set = predict_with(
        &resampled,
        prediction_sigma(frame, &model.params),
        model.map,
        &mut rng,
    );
    if factors.is_empty() {
        // empty product: pure prediction
        event.ess = set.len() as f64;
        return (set, event);
    }

    let sigma_c = model.params.sigma_c;
    let log_w: Vec<f64> = set
        .positions()
        .iter()
        .map(|x| {
            factors
                .iter()
                .map(|f| match f {
                    Factor::Object {
                        support,
                        kernel,
                        belief,
                    } => log_measurement_factor(x, support, belief, *kernel),
                    Factor::Context { support, belief } => log_context_factor(x, support, belief, sigma_c),
                })
                .sum()
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if max.is_finite() {
        log_w.iter().map(|l| (l - max).exp()).collect()
    } else {
        vec![0.0; log_w.len()]
    };
    if !set.set_weights(weights) {
        event.degenerate = true;
        log::warn!("degenerate belief for frame '{}', resetting to uniform", frame.id);
        set = init_particles_from_prior(model.map, &frame.id, prev.len(), seed)
            .unwrap_or_else(|_| resampled.clone());
    }

    let ess = effective_sample_size(&set);
    event.ess = ess;
    let params = &model.params;
    if ess / (set.len() as f64) < params.ess_threshold {
        set = reinvigorate_with(&set, model.map, params.reinvigoration_fraction, &mut rng);
        event.reinvigorated = reinvigoration_count(set.len(), params.reinvigoration_fraction);
    }
    (set, event)
}
