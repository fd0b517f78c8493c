//! Deterministic 2D household simulator: annotated map, ground truth,
//! range-limited sensing, grid navigation and primitive actions.

mod map;
mod nav;
mod scenario;
mod sim;

pub use map::{Room, SensorModel, WorldMap};
pub use nav::{path_length, point_along, NavGrid};
pub use scenario::{
    parse_scenario, serialize_scenario, ObjectSpec, Placement, Reasoning, Scenario, ScenarioError,
    DEFAULT_REACH, DEFAULT_STEP,
};
pub use sim::{
    is_manipulation, load_scenario, ActionResult, Detection, GroundTruthObject, NavigationResult,
    ObjectLocation, Observation, World, WorldError,
};
