//! Particle inference over frame and object locations.
//!
//! Object sets follow a room-prior filter driven by detections. Frame sets
//! are reweighted each step by measurement factors toward their involved
//! objects and a context factor toward their next unmet precondition.

mod beliefs;
mod frame_filter;
mod object_filter;
mod particles;
mod potentials;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use beliefs::{BeliefSummary, Beliefs};
pub use frame_filter::{predict_frame, update_frame_filter, FrameModel, FrameSets, ObjectSets};
pub use object_filter::{update_object_filter, EPSILON_FLOOR};
pub use particles::{
    effective_sample_size, init_particles_from_prior, reinvigorate, reinvigoration_count, resample,
    ParticleSet, BACKGROUND,
};
pub use potentials::{
    context_factor, log_context_factor, log_measurement_factor, measurement_factor, Kernel, PotentialParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("the map has no free space to draw particles from")]
    EmptyFreeSpace,
    #[error("a particle set needs at least one particle")]
    EmptySet,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid potential parameters: {0}")]
    InvalidParams(String),
}

/// What happened to one set during an update, for the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub owner: String,
    /// Effective sample size right after reweighting.
    pub ess: f64,
    pub resampled: bool,
    pub reinvigorated: usize,
    /// All weights vanished and the set was reset.
    pub degenerate: bool,
}

impl UpdateEvent {
    fn new(owner: &str) -> Self {
        UpdateEvent {
            owner: owner.to_string(),
            ess: 0.0,
            resampled: false,
            reinvigorated: 0,
            degenerate: false,
        }
    }
}
