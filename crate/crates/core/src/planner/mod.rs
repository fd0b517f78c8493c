//! Precondition chaining, belief-mode extraction and the execution loop.

mod chain;
mod executor;
mod goal;
mod mixture;

use thiserror::Error;

use crate::geometry::Point;

pub use chain::plan_precondition_chain;
pub(crate) use executor::step_toward;
pub use executor::{
    execute_frame, ActionOutcome, ExecutionTrace, ExecutorConfig, Mode, Snapshot, StepRecord, TerminalStatus,
    TrialMetrics,
};
pub use goal::{select_component, select_navigation_goal, NavigationGoal, VIEW_FRACTION};
pub use mixture::{fit_mixture, fit_weighted, GaussianMixture, MixtureComponent, COVARIANCE_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("cannot fit {k_max} components to {particles} particles")]
    TooFewParticles { particles: usize, k_max: usize },
    #[error("invalid mixture input: {0}")]
    InvalidInput(String),
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("no reachable viewpoint for target ({}, {})", .0.x, .0.y)]
    NoReachableViewpoint(Point),
}
