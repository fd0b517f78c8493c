//! Active search and execution loop.
//!
//! Every timestep the robot observes, updates all beliefs, replans the
//! precondition chain and then does one thing: act on the current frame
//! when its Core object has been localized and is within reach, walk one
//! step toward it when localized but far, or walk one step toward a
//! viewpoint of the frame belief's dominant mixture component.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::chain::plan_precondition_chain;
use super::goal::select_navigation_goal;
use super::mixture::fit_mixture;
use crate::frames::{FrameInstance, FrameLibrary};
use crate::geometry::{Point, Pose};
use crate::inference::{BeliefSummary, Beliefs, FrameModel, ParticleSet, PotentialParams, UpdateEvent};
use crate::rng;
use crate::state::RobotState;
use crate::world::{is_manipulation, path_length, point_along, World, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    /// Timesteps before the task counts as timed out.
    pub budget: usize,
    pub particles: usize,
    pub k_max: usize,
    /// Commit once this much Core-object mass lies within `commit_radius`
    /// of its last detection.
    pub commit_mass: f64,
    pub commit_radius: f64,
    /// Consecutive no-op goals before switching to waypoint exploration.
    pub stall_limit: usize,
    /// Keep a full particle snapshot every this many steps (0: final only).
    pub snapshot_every: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            budget: 400,
            particles: 200,
            k_max: 3,
            commit_mass: 0.5,
            commit_radius: 1.0,
            stall_limit: 3,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TerminalStatus {
    Success,
    Failure { reason: String },
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Heading for a viewpoint of the frame belief.
    Search,
    /// Walking waypoints after search stalled.
    Explore,
    /// Core object localized; walking to a pose within reach.
    Approach,
    /// Running one of the frame's primitives.
    Act,
    /// Scripted pose; beliefs update but nothing is planned.
    Observe,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: String,
    pub success: bool,
    pub completed_frame: bool,
    /// Primitive refused to run (e.g. the object was not within reach).
    pub error: Option<String>,
}

/// One timestep. Robot fields describe the state before the step's action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub timestep: usize,
    pub pose: Pose,
    pub gripper: Option<String>,
    pub executed: Vec<String>,
    pub frame: Option<String>,
    pub mode: Mode,
    pub goal: Option<Pose>,
    pub outcome: Option<ActionOutcome>,
    pub detections: Vec<String>,
    pub beliefs: Vec<BeliefSummary>,
    /// Only reinvigorations and degenerate resets.
    pub events: Vec<UpdateEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestep: usize,
    pub sets: Vec<ParticleSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub task: String,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub status: TerminalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub success: bool,
    pub status: TerminalStatus,
    pub steps: usize,
    pub path_length: f64,
    pub frames_executed: Vec<String>,
    pub actions: Vec<String>,
    pub manipulation_actions: usize,
}

impl ExecutionTrace {
    pub fn metrics(&self) -> TrialMetrics {
        let path_length = self
            .records
            .windows(2)
            .map(|w| w[0].pose.position().distance(&w[1].pose.position()))
            .sum();
        let done: Vec<&ActionOutcome> = self
            .records
            .iter()
            .filter_map(|r| r.outcome.as_ref())
            .filter(|o| o.success)
            .collect();
        let actions: Vec<String> = done.iter().map(|o| o.action.clone()).collect();
        let frames_executed: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.outcome.as_ref().is_some_and(|o| o.completed_frame))
            .filter_map(|r| r.frame.clone())
            .collect();
        // a scripted run ends in Success without ever attempting the task
        let completed = frames_executed.contains(&self.task);
        TrialMetrics {
            success: self.status == TerminalStatus::Success && completed,
            status: self.status.clone(),
            steps: self.records.len(),
            path_length,
            manipulation_actions: actions.iter().filter(|a| is_manipulation(a)).count(),
            actions,
            frames_executed,
        }
    }

    /// Replays the trace: every completed frame must have had all its
    /// preconditions met in the state recorded just before its final
    /// action.
    pub fn verify_ordering(&self, library: &FrameLibrary) -> Result<(), String> {
        for r in &self.records {
            let Some(o) = &r.outcome else { continue };
            if !o.completed_frame {
                continue;
            }
            let id = r.frame.as_deref().ok_or("completed action without a frame")?;
            let frame = library.get(id).ok_or_else(|| format!("unknown frame '{id}'"))?;
            let state = RobotState {
                pose: r.pose,
                gripper: r.gripper.clone(),
                executed: r.executed.clone(),
            };
            if let Some(missing) = library.next_unmet_precondition(frame, &state) {
                return Err(format!(
                    "step {}: '{id}' completed before its precondition '{missing}'",
                    r.timestep
                ));
            }
        }
        Ok(())
    }
}

/// Moves the robot up to one step length along a planned path to `goal`.
pub(crate) fn step_toward(world: &mut World, goal: &Pose) -> Result<(), WorldError> {
    let path = world.plan_path(&goal.position())?;
    let length = path_length(&path);
    let step = world.step_length();
    if length <= step {
        world.set_robot_pose(*goal);
    } else {
        let (p, h) = point_along(&path, step);
        world.set_robot_pose(Pose::at(p, h));
    }
    Ok(())
}

/// Runs `task` to completion, failure or timeout. Beliefs are updated in
/// place so callers can inspect or render them afterwards.
pub fn execute_frame(
    task: &FrameInstance,
    world: &mut World,
    beliefs: &mut Beliefs,
    library: &FrameLibrary,
    params: &PotentialParams,
    config: &ExecutorConfig,
    seed: u64,
) -> ExecutionTrace {
    let map = world.map().clone();
    let sensor = *world.sensor();
    let model = FrameModel {
        library,
        map: &map,
        params: *params,
        pose_reach: match world.reasoning() {
            crate::world::Reasoning::Pose => Some(world.reach_radius()),
            crate::world::Reasoning::Location => None,
        },
    };
    // covers every standoff ring the simulator offers
    let act_radius = 0.75 * world.reach_radius() + 1e-9;

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut status = TerminalStatus::Timeout;
    let mut action_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut stalls = 0usize;
    let mut explore: Option<Point> = None;
    let mut waypoint_cursor = 0usize;
    let mut explore_rng = rng::stream(seed, 50);

    for t in 0..config.budget {
        let step_seed = rng::mix(seed, t as u64);
        let obs = world.observe_here();
        let state = world.robot().clone();
        let events = beliefs.step(std::slice::from_ref(&obs), &state, &sensor, &model, step_seed);
        if config.snapshot_every > 0 && t % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                timestep: t,
                sets: beliefs.sets().cloned().collect(),
            });
        }
        let mut record = StepRecord {
            timestep: t,
            pose: state.pose,
            gripper: state.gripper.clone(),
            executed: state.executed.clone(),
            frame: None,
            mode: Mode::Done,
            goal: None,
            outcome: None,
            detections: obs.detections.iter().map(|d| d.class.clone()).collect(),
            beliefs: beliefs.summary(),
            events: events
                .into_iter()
                .filter(|e| e.degenerate || e.reinvigorated > 0)
                .collect(),
        };

        if state.has_executed(&task.frame) {
            status = TerminalStatus::Success;
            records.push(record);
            break;
        }
        let chain = plan_precondition_chain(task, &state, library);
        let current = chain.first().cloned().unwrap_or_else(|| task.frame.clone());
        record.frame = Some(current.clone());
        let Some(frame) = library.get(&current) else {
            status = TerminalStatus::Failure {
                reason: format!("unknown frame '{current}'"),
            };
            records.push(record);
            break;
        };
        let Some(core) = library.core_classes(frame, &state).into_iter().next() else {
            status = TerminalStatus::Failure {
                reason: format!("frame '{current}' has no Core object"),
            };
            records.push(record);
            break;
        };

        let here = state.pose.position();
        let estimate = beliefs.confident_estimate(&core, config.commit_mass, config.commit_radius);
        let standoff = estimate.and_then(|target| world.standoff_pose(&target).map(|s| (target, s)));
        let mut failure = None;

        if let Some((target, standoff)) = standoff {
            stalls = 0;
            explore = None;
            let idx = action_index.entry(current.clone()).or_insert(0);
            let action = frame.actions[(*idx).min(frame.actions.len() - 1)].clone();
            let facing = Pose::facing(here, &target);
            let in_place = if action == "look" {
                sensor.can_see(&map, &facing, &target)
            } else {
                here.distance(&target) <= act_radius && map.line_of_sight(&here, &target)
            };
            if in_place {
                record.mode = Mode::Act;
                world.set_robot_pose(facing);
                record.pose = world.robot().pose;
                let instance = FrameInstance::new(current.clone());
                match world.execute_primitive(&action, &instance, library) {
                    Ok(r) => {
                        if r.success {
                            *idx += 1;
                        }
                        if r.completed_frame {
                            *idx = 0;
                        }
                        record.outcome = Some(ActionOutcome {
                            action,
                            success: r.success,
                            completed_frame: r.completed_frame,
                            error: None,
                        });
                    }
                    Err(e @ WorldError::PreconditionViolation { .. }) => {
                        failure = Some(e.to_string());
                    }
                    Err(e) => {
                        // the estimate was off; look again
                        beliefs.forget_detection(&core);
                        *idx = 0;
                        record.outcome = Some(ActionOutcome {
                            action,
                            success: false,
                            completed_frame: false,
                            error: Some(e.to_string()),
                        });
                    }
                }
            } else {
                record.mode = Mode::Approach;
                record.goal = Some(standoff);
                if let Err(e) = step_toward(world, &standoff) {
                    failure = Some(e.to_string());
                }
            }
        } else {
            if explore.is_none() {
                let set = &beliefs.frames[&current];
                let goal = fit_mixture(set, config.k_max.min(set.len()), step_seed)
                    .ok()
                    .and_then(|m| select_navigation_goal(&m, &map, world.nav(), &state.pose, &sensor).ok());
                // a goal at the current position only turns the robot
                // back to a heading it has already seen from
                let goal = goal.map(|mut g| {
                    g.noop |= g.pose.position().distance(&here) < 1e-6;
                    g
                });
                match goal {
                    Some(g) if !g.noop => {
                        stalls = 0;
                        record.mode = Mode::Search;
                        record.goal = Some(g.pose);
                        if step_toward(world, &g.pose).is_err() {
                            stalls += 1;
                        }
                    }
                    Some(_) => {
                        // already looking at the mode without a detection:
                        // turn to sweep a new sector
                        stalls += 1;
                        record.mode = Mode::Search;
                        let turned = Pose::at(here, state.pose.heading + sensor.fov);
                        record.goal = Some(turned);
                        world.set_robot_pose(turned);
                    }
                    None => stalls = config.stall_limit + 1,
                }
                if stalls > config.stall_limit {
                    stalls = 0;
                    let waypoints = world.waypoints();
                    explore = if waypoints.is_empty() {
                        map.sample_free(&mut explore_rng)
                    } else {
                        waypoint_cursor = (waypoint_cursor + 1) % waypoints.len();
                        Some(waypoints[waypoint_cursor])
                    };
                }
            } else if let Some(wp) = explore {
                record.mode = Mode::Explore;
                let heading = here.bearing_to(&wp);
                let goal = Pose::at(wp, heading);
                record.goal = Some(goal);
                if step_toward(world, &goal).is_err() || world.robot().pose.position().distance(&wp) < 1e-9 {
                    explore = None;
                }
            }
        }
        records.push(record);
        if let Some(reason) = failure {
            status = TerminalStatus::Failure { reason };
            break;
        }
    }
    snapshots.push(Snapshot {
        timestep: records.len(),
        sets: beliefs.sets().cloned().collect(),
    });
    ExecutionTrace {
        task: task.frame.clone(),
        records,
        snapshots,
        status,
    }
}
