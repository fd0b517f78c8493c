//! State-conditioned relation beliefs.
//!
//! Precondition progress ("stage") drives everything here. A precondition is
//! satisfied when the robot has executed it, or when all of its declared
//! postconditions are visible in the robot state (a robot that starts out
//! holding a spoon has met "grasp spoon" without ever executing it). Only
//! gripper effects are visible in the robot state; moved objects and state
//! flags are known to the robot through its execution history.
//!
//! The stage of a frame counts its contiguously satisfied preconditions in
//! declared order. Executing a later precondition implies the earlier ones
//! were met at the time, so the count resumes after the last executed one.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Debug;

use super::model::*;
use crate::state::RobotState;

pub trait RelationKind: Copy + Ord + Debug {
    const DISJOINT: Self;
}

impl RelationKind for Role {
    const DISJOINT: Self = Role::Disjoint;
}

impl RelationKind for ContextRole {
    const DISJOINT: Self = ContextRole::Disjoint;
}

/// Belief over relation roles; weights are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDistribution<R: Ord> {
    weights: BTreeMap<R, f64>,
}

impl<R: RelationKind> RelationDistribution<R> {
    pub fn point(role: R) -> Self {
        RelationDistribution {
            weights: BTreeMap::from([(role, 1.0)]),
        }
    }

    /// Soft belief, e.g. from a learned model. Rejects negative or
    /// non-finite weights and sums off by more than 1e-9.
    pub fn new(weights: impl IntoIterator<Item = (R, f64)>) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (role, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("invalid weight {w} for {role:?}"));
            }
            *map.entry(role).or_insert(0.0) += w;
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("weights sum to {total}, expected 1"));
        }
        map.retain(|_, w| *w > 0.0);
        Ok(RelationDistribution { weights: map })
    }

    pub fn weight(&self, role: R) -> f64 {
        self.weights.get(&role).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (R, f64)> + '_ {
        self.weights.iter().map(|(r, w)| (*r, *w))
    }

    /// Mass on roles that contribute a potential.
    pub fn involved_mass(&self) -> f64 {
        self.iter()
            .filter(|(r, _)| *r != R::DISJOINT)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn is_disjoint(&self) -> bool {
        self.involved_mass() == 0.0
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

pub type ElementBelief = RelationDistribution<Role>;
pub type PreconditionBelief = RelationDistribution<ContextRole>;

fn effect_visible(effect: &StateEffect, state: &RobotState) -> Option<bool> {
    match effect {
        StateEffect::GripperSet { object } => Some(state.gripper.as_deref() == Some(object)),
        StateEffect::GripperClear => Some(state.gripper.is_none()),
        _ => None,
    }
}

impl FrameLibrary {
    /// True if `frame_id` has been executed or its postconditions are all
    /// reflected in `state`.
    pub fn is_satisfied(&self, frame_id: &str, state: &RobotState) -> bool {
        if state.has_executed(frame_id) {
            return true;
        }
        let Some(frame) = self.get(frame_id) else {
            return false;
        };
        !frame.postconditions.is_empty()
            && frame
                .postconditions
                .iter()
                .all(|e| effect_visible(e, state) == Some(true))
    }

    pub fn stage(&self, frame: &SemanticFrame, state: &RobotState) -> usize {
        let mut stage = frame
            .preconditions
            .iter()
            .rposition(|p| state.has_executed(p))
            .map_or(0, |i| i + 1);
        while stage < frame.preconditions.len() && self.is_satisfied(&frame.preconditions[stage], state) {
            stage += 1;
        }
        stage
    }

    pub fn next_unmet_precondition<'a>(
        &self,
        frame: &'a SemanticFrame,
        state: &RobotState,
    ) -> Option<&'a str> {
        frame
            .preconditions
            .get(self.stage(frame, state))
            .map(String::as_str)
    }

    /// Point mass on the element's role at the current stage, or on
    /// Disjoint when the class is not an element of the frame.
    pub fn relation_belief(
        &self,
        frame: &SemanticFrame,
        object_class: &str,
        state: &RobotState,
    ) -> ElementBelief {
        match frame.element(object_class) {
            Some(e) => RelationDistribution::point(e.roles.role_at(self.stage(frame, state))),
            None => RelationDistribution::point(Role::Disjoint),
        }
    }

    /// Precondition iff `other` is the next unmet precondition of `frame`.
    pub fn frame_relation_belief(
        &self,
        frame: &SemanticFrame,
        other: &SemanticFrame,
        state: &RobotState,
    ) -> PreconditionBelief {
        if self.next_unmet_precondition(frame, state) == Some(other.id.as_str()) {
            RelationDistribution::point(ContextRole::Precondition)
        } else {
            RelationDistribution::point(ContextRole::Disjoint)
        }
    }

    /// Object classes that are Core for `frame` under `state`.
    pub fn core_classes(&self, frame: &SemanticFrame, state: &RobotState) -> Vec<String> {
        frame
            .core_classes(self.stage(frame, state))
            .map(str::to_string)
            .collect()
    }
}
