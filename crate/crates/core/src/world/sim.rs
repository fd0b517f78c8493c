use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::map::{SensorModel, WorldMap};
use super::nav::{path_length, point_along, NavGrid};
use super::scenario::{parse_scenario, Placement, Reasoning, Scenario, ScenarioError};
use crate::frames::{FrameInstance, FrameLibrary, Role, SemanticFrame, StateEffect};
use crate::geometry::{Point, Pose};
use crate::rng::{self, SimRng};
use crate::state::RobotState;

const PLACEMENT_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;
const PRIMITIVE_STREAM: u64 = 2;

/// Actions that do not touch objects.
const NON_MANIPULATION: [&str; 2] = ["navigate", "look"];

pub fn is_manipulation(action: &str) -> bool {
    !NON_MANIPULATION.contains(&action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub position: Point,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub detections: Vec<Detection>,
    pub viewpoint: Pose,
    pub range: f64,
    pub fov: f64,
}

impl Observation {
    pub fn detections_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Detection> + 'a {
        self.detections.iter().filter(move |d| d.class == class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectLocation {
    Map { position: Point },
    Gripper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class: String,
    pub location: ObjectLocation,
    pub flags: BTreeSet<String>,
}

impl GroundTruthObject {
    pub fn position(&self) -> Option<Point> {
        match self.location {
            ObjectLocation::Map { position } => Some(position),
            ObjectLocation::Gripper => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationResult {
    pub path: Vec<Point>,
    pub length: f64,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub action: String,
    pub success: bool,
    /// True when this was the frame's last action and its effects applied.
    pub completed_frame: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("no path to ({x:.2}, {y:.2})", x = .0.x, y = .0.y)]
    Unreachable(Point),
    #[error("cannot place '{0}': no free space in its room")]
    Placement(String),
    #[error("precondition '{missing}' of frame '{frame}' is not met")]
    PreconditionViolation { frame: String, missing: String },
    #[error("'{object}' is {distance:.2} m away, beyond reach")]
    OutOfReach { object: String, distance: f64 },
    #[error("frame '{0}' has no Core object on the map")]
    NoAffordance(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("action '{action}' is not part of frame '{frame}'")]
    InvalidAction { frame: String, action: String },
    #[error("gripper already holds '{0}'")]
    GripperOccupied(String),
    #[error("'{0}' is not on the map")]
    ObjectAbsent(String),
    #[error("'{0}' is not visible from here")]
    NotVisible(String),
}

/// Seeded, single-owner household simulator.
#[derive(Debug, Clone)]
pub struct World {
    map: WorldMap,
    sensor: SensorModel,
    reach_radius: f64,
    step_length: f64,
    success: BTreeMap<String, f64>,
    reasoning: Reasoning,
    waypoints: Vec<Point>,
    objects: BTreeMap<String, GroundTruthObject>,
    robot: RobotState,
    nav: NavGrid,
    observation_rng: SimRng,
    primitive_rng: SimRng,
}

pub fn load_scenario(source: &str, seed: u64) -> Result<World, WorldError> {
    World::new(parse_scenario(source)?, seed)
}

impl World {
    pub fn new(scenario: Scenario, seed: u64) -> Result<World, WorldError> {
        let mut placement_rng = rng::stream(seed, PLACEMENT_STREAM);
        let mut objects = BTreeMap::new();
        for spec in &scenario.objects {
            let position = match &spec.placement {
                Placement::At { position } => *position,
                Placement::InRoom { room } => {
                    let room = scenario.map.room(room).expect("validated by parser");
                    scenario
                        .map
                        .sample_in_room(room, &mut placement_rng)
                        .ok_or_else(|| WorldError::Placement(spec.class.clone()))?
                }
            };
            objects.insert(
                spec.class.clone(),
                GroundTruthObject {
                    class: spec.class.clone(),
                    location: ObjectLocation::Map { position },
                    flags: BTreeSet::new(),
                },
            );
        }
        if let Some(held) = &scenario.holding {
            objects.insert(
                held.clone(),
                GroundTruthObject {
                    class: held.clone(),
                    location: ObjectLocation::Gripper,
                    flags: BTreeSet::new(),
                },
            );
        }
        let mut robot = RobotState::new(scenario.robot);
        robot.gripper = scenario.holding.clone();
        let nav = NavGrid::new(&scenario.map, scenario.step_length.min(0.25));
        Ok(World {
            map: scenario.map,
            sensor: scenario.sensor,
            reach_radius: scenario.reach_radius,
            step_length: scenario.step_length,
            success: scenario.success,
            reasoning: scenario.reasoning,
            waypoints: scenario.waypoints,
            objects,
            robot,
            nav,
            observation_rng: rng::stream(seed, OBSERVATION_STREAM),
            primitive_rng: rng::stream(seed, PRIMITIVE_STREAM),
        })
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn reach_radius(&self) -> f64 {
        self.reach_radius
    }

    pub fn step_length(&self) -> f64 {
        self.step_length
    }

    pub fn reasoning(&self) -> Reasoning {
        self.reasoning
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn nav(&self) -> &NavGrid {
        &self.nav
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn robot_mut(&mut self) -> &mut RobotState {
        &mut self.robot
    }

    pub fn objects(&self) -> impl Iterator<Item = &GroundTruthObject> {
        self.objects.values()
    }

    pub fn object(&self, class: &str) -> Option<&GroundTruthObject> {
        self.objects.get(class)
    }

    /// Position of `class` if it lies on the map (not held, not absent).
    pub fn object_position(&self, class: &str) -> Option<Point> {
        self.objects.get(class).and_then(GroundTruthObject::position)
    }

    /// Sensor reading from `pose`. Every object in range, inside the field
    /// of view and not hidden behind an obstacle is reported with
    /// probability `1 - miss_rate`, displaced by Gaussian noise.
    pub fn observe(&mut self, pose: &Pose) -> Observation {
        let noise = Normal::new(0.0, self.sensor.noise).expect("noise is finite and non-negative");
        let mut detections = Vec::new();
        for obj in self.objects.values() {
            let Some(truth) = obj.position() else { continue };
            if !self.sensor.can_see(&self.map, pose, &truth) {
                continue;
            }
            let hit = self.observation_rng.random::<f64>() >= self.sensor.miss_rate;
            let dx = noise.sample(&mut self.observation_rng);
            let dy = noise.sample(&mut self.observation_rng);
            if hit {
                let d = pose.position().distance(&truth);
                detections.push(Detection {
                    class: obj.class.clone(),
                    position: Point::new(truth.x + dx, truth.y + dy),
                    confidence: 1.0 - 0.5 * (d / self.sensor.range).min(1.0),
                });
            }
        }
        Observation {
            detections,
            viewpoint: *pose,
            range: self.sensor.range,
            fov: self.sensor.fov,
        }
    }

    pub fn observe_here(&mut self) -> Observation {
        let pose = self.robot.pose;
        self.observe(&pose)
    }

    pub fn plan_path(&self, target: &Point) -> Result<Vec<Point>, WorldError> {
        self.nav
            .plan(&self.map, &self.robot.pose.position(), target)
            .ok_or(WorldError::Unreachable(*target))
    }

    /// Moves the robot along a planned path to `target`, observing once per
    /// `step_length` of travel (and once when the path has zero length).
    pub fn step_navigate(&mut self, target: &Pose) -> Result<NavigationResult, WorldError> {
        let path = self.plan_path(&target.position())?;
        let length = path_length(&path);
        let steps = (length / self.step_length).ceil() as usize;
        let mut observations = Vec::with_capacity(steps.max(1));
        if steps == 0 {
            self.robot.pose = Pose::at(target.position(), target.heading);
            observations.push(self.observe_here());
        }
        for k in 1..=steps {
            let pose = if k == steps {
                Pose::at(target.position(), target.heading)
            } else {
                let (p, h) = point_along(&path, k as f64 * self.step_length);
                Pose::at(p, h)
            };
            self.robot.pose = pose;
            observations.push(self.observe_here());
        }
        Ok(NavigationResult {
            path,
            length,
            observations,
        })
    }

    /// Places the robot directly; used by planners that step along their own
    /// already-validated paths.
    pub fn set_robot_pose(&mut self, pose: Pose) {
        self.robot.pose = pose;
    }

    fn frame<'a>(&self, library: &'a FrameLibrary, id: &str) -> Result<&'a SemanticFrame, WorldError> {
        library
            .get(id)
            .ok_or_else(|| WorldError::UnknownFrame(id.to_string()))
    }

    /// Core object of the frame at the robot's current progress.
    pub fn core_object<'a>(&self, library: &FrameLibrary, frame: &'a SemanticFrame) -> Option<&'a str> {
        let stage = library.stage(frame, &self.robot);
        frame
            .elements
            .iter()
            .find(|e| e.roles.role_at(stage) == Role::Core)
            .map(|e| e.object_class.as_str())
    }

    /// Runs one primitive of `frame`. The frame's effects are applied when
    /// its last action succeeds.
    pub fn execute_primitive(
        &mut self,
        action: &str,
        instance: &FrameInstance,
        library: &FrameLibrary,
    ) -> Result<ActionResult, WorldError> {
        let frame = self.frame(library, &instance.frame)?;
        let Some(index) = frame.actions.iter().position(|a| a == action) else {
            return Err(WorldError::InvalidAction {
                frame: frame.id.clone(),
                action: action.to_string(),
            });
        };
        if let Some(missing) = library.next_unmet_precondition(frame, &self.robot) {
            return Err(WorldError::PreconditionViolation {
                frame: frame.id.clone(),
                missing: missing.to_string(),
            });
        }
        let core = self
            .core_object(library, frame)
            .ok_or_else(|| WorldError::NoAffordance(frame.id.clone()))?
            .to_string();
        let here = self.robot.pose.position();
        let target = self
            .object_position(&core)
            .ok_or_else(|| WorldError::ObjectAbsent(core.clone()))?;
        if action == "look" {
            if !self.sensor.can_see(&self.map, &self.robot.pose, &target) {
                return Err(WorldError::NotVisible(core));
            }
        } else {
            let distance = here.distance(&target);
            if distance > self.reach_radius {
                return Err(WorldError::OutOfReach {
                    object: core,
                    distance,
                });
            }
        }
        let is_last = index + 1 == frame.actions.len();
        if is_last {
            self.check_effects(frame)?;
        }
        let p = self.success.get(action).copied().unwrap_or(1.0);
        let draw: f64 = self.primitive_rng.random();
        let success = draw < p;
        if success && is_last {
            let effects = frame.postconditions.clone();
            for e in &effects {
                self.apply_effect(e);
            }
            self.robot.record_executed(&frame.id);
        }
        Ok(ActionResult {
            action: action.to_string(),
            success,
            completed_frame: success && is_last,
        })
    }

    fn check_effects(&self, frame: &SemanticFrame) -> Result<(), WorldError> {
        for e in &frame.postconditions {
            match e {
                StateEffect::GripperSet { object } => {
                    if let Some(held) = &self.robot.gripper {
                        if held != object {
                            return Err(WorldError::GripperOccupied(held.clone()));
                        }
                    }
                    if self.object_position(object).is_none() && self.robot.gripper.as_ref() != Some(object) {
                        return Err(WorldError::ObjectAbsent(object.clone()));
                    }
                }
                StateEffect::ObjectMovedTo { object, destination } => {
                    if !self.objects.contains_key(object) {
                        return Err(WorldError::ObjectAbsent(object.clone()));
                    }
                    if self.object_position(destination).is_none() {
                        return Err(WorldError::ObjectAbsent(destination.clone()));
                    }
                }
                StateEffect::ObjectStateFlag { object, .. } => {
                    if !self.objects.contains_key(object) {
                        return Err(WorldError::ObjectAbsent(object.clone()));
                    }
                }
                StateEffect::GripperClear => {}
            }
        }
        Ok(())
    }

    fn apply_effect(&mut self, effect: &StateEffect) {
        match effect {
            StateEffect::GripperSet { object } => {
                if let Some(obj) = self.objects.get_mut(object) {
                    obj.location = ObjectLocation::Gripper;
                }
                self.robot.gripper = Some(object.clone());
            }
            StateEffect::GripperClear => {
                if let Some(held) = self.robot.gripper.take() {
                    if let Some(obj) = self.objects.get_mut(&held) {
                        obj.location = ObjectLocation::Map {
                            position: self.robot.pose.position(),
                        };
                    }
                }
            }
            StateEffect::ObjectMovedTo { object, destination } => {
                let Some(position) = self.object_position(destination) else {
                    return;
                };
                if let Some(obj) = self.objects.get_mut(object) {
                    obj.location = ObjectLocation::Map { position };
                }
                if self.robot.gripper.as_ref() == Some(object) {
                    self.robot.gripper = None;
                }
            }
            StateEffect::ObjectStateFlag { object, flag } => {
                if let Some(obj) = self.objects.get_mut(object) {
                    obj.flags.insert(flag.clone());
                }
            }
        }
    }

    /// True when every declared effect of `frame` holds in the world and
    /// robot state right now.
    pub fn postconditions_hold(&self, frame: &SemanticFrame) -> bool {
        frame.postconditions.iter().all(|e| match e {
            StateEffect::GripperSet { object } => {
                self.robot.gripper.as_ref() == Some(object)
                    && self
                        .objects
                        .get(object)
                        .is_some_and(|o| o.location == ObjectLocation::Gripper)
            }
            StateEffect::GripperClear => self.robot.gripper.is_none(),
            StateEffect::ObjectMovedTo { object, destination } => {
                match (self.object_position(object), self.object_position(destination)) {
                    (Some(a), Some(b)) => a.distance(&b) < 1e-9,
                    _ => false,
                }
            }
            StateEffect::ObjectStateFlag { object, flag } => {
                self.objects.get(object).is_some_and(|o| o.flags.contains(flag))
            }
        })
    }

    /// Collision-free pose within reach of the frame's current Core object,
    /// facing it. Candidates on rings around the object are tried nearest to
    /// the robot first.
    pub fn ground_truth_afforded_pose(
        &self,
        instance: &FrameInstance,
        library: &FrameLibrary,
    ) -> Result<Pose, WorldError> {
        let frame = self.frame(library, &instance.frame)?;
        let core = self
            .core_object(library, frame)
            .ok_or_else(|| WorldError::NoAffordance(frame.id.clone()))?;
        let target = self
            .object_position(core)
            .ok_or_else(|| WorldError::NoAffordance(frame.id.clone()))?;
        self.standoff_pose(&target)
            .ok_or_else(|| WorldError::NoAffordance(frame.id.clone()))
    }

    /// Reachable pose within reach of `target` with a clear line to it.
    pub fn standoff_pose(&self, target: &Point) -> Option<Pose> {
        let here = self.robot.pose.position();
        let usable = |c: &Point| {
            self.map.is_free(c)
                && self.map.line_of_sight(c, target)
                && self.nav.connected(&self.map, &here, c)
        };
        let nearest = |cs: Vec<Point>| {
            cs.into_iter()
                .filter(|c| usable(c))
                .min_by(|a, b| a.distance_sq(&here).total_cmp(&b.distance_sq(&here)))
        };
        // rings in order of preference; the nearest point of the first
        // ring with any usable point wins
        [0.5, 0.25, 0.75]
            .into_iter()
            .find_map(|frac| {
                let r = frac * self.reach_radius;
                nearest(
                    (0..16)
                        .map(|k| {
                            let a = k as f64 * std::f64::consts::TAU / 16.0;
                            Point::new(target.x + r * a.cos(), target.y + r * a.sin())
                        })
                        .collect(),
                )
            })
            .or_else(|| nearest(vec![*target]))
            .map(|c| Pose::facing(c, target))
    }
}
