//! Seeded single runs and experiment suites.
//!
//! A run loads a scenario and frame library, parses the task utterance,
//! and then either holds the robot at one pose (`fixed`), walks the
//! scenario's waypoint tour while looking around (`tour`), or executes the
//! task (`task`). Every output is a pure function of the configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{parse_command, parse_frame_library, CommandError, FrameLibrary, LibraryError};
use crate::geometry::Pose;
use crate::inference::{Beliefs, FrameModel, InferenceError, PotentialParams};
use crate::planner::{
    execute_frame, step_toward, ExecutionTrace, ExecutorConfig, Mode, Snapshot, StepRecord, TerminalStatus,
};
use crate::render::{render_snapshot, save_png};
use crate::rng;
use crate::trace::{write_trace, TraceHeader, SCHEMA, VERSION};
use crate::world::{parse_scenario, Reasoning, Scenario, ScenarioError, World, WorldError};

/// Stream for belief initialization, kept apart from the world's streams.
const BELIEF_STREAM: u64 = 60;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("frame library: {0}")]
    Library(#[from] LibraryError),
    #[error("task: {0}")]
    Command(#[from] CommandError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("beliefs: {0}")]
    Inference(#[from] InferenceError),
    #[error("configuration: {0}")]
    Config(String),
}

impl RunError {
    /// Stable identifier for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io { .. } => "io",
            RunError::Scenario(_) => "scenario",
            RunError::Library(_) => "library",
            RunError::Command(_) => "command",
            RunError::World(_) => "world",
            RunError::Inference(_) => "inference",
            RunError::Config(_) => "config",
        }
    }
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Robot held at one pose for `iterations` belief updates.
    Fixed,
    /// Waypoint tour with a turn in place at every waypoint.
    Tour,
    /// Active search and execution of the task.
    #[default]
    Task,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Fixed => "fixed",
            RunMode::Tour => "tour",
            RunMode::Task => "task",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub library: PathBuf,
    pub task: String,
    pub seed: u64,
    pub mode: RunMode,
    pub params: PotentialParams,
    pub particles: usize,
    /// Belief updates in `fixed` mode.
    pub iterations: usize,
    /// Timestep budget in `task` mode.
    pub budget: usize,
    /// Overrides the scenario's robot pose.
    pub pose: Option<Pose>,
    /// Overrides the scenario's gripper contents.
    pub holding: Option<String>,
    /// Headings visited at each tour waypoint.
    pub tour_turns: usize,
    pub snapshot_every: usize,
    pub out_dir: Option<PathBuf>,
    pub render: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: PathBuf::new(),
            library: PathBuf::new(),
            task: String::new(),
            seed: 0,
            mode: RunMode::Task,
            params: PotentialParams::default(),
            particles: 200,
            iterations: 20,
            budget: ExecutorConfig::default().budget,
            pose: None,
            holding: None,
            tour_turns: 3,
            snapshot_every: 0,
            out_dir: None,
            render: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.particles == 0 {
            return Err(RunError::Config("particle count must be at least 1".into()));
        }
        if self.tour_turns == 0 {
            return Err(RunError::Config("tour_turns must be at least 1".into()));
        }
        self.params.validate().map_err(RunError::Inference)
    }

    fn executor(&self) -> ExecutorConfig {
        ExecutorConfig {
            budget: self.budget,
            particles: self.particles,
            snapshot_every: self.snapshot_every,
            ..ExecutorConfig::default()
        }
    }
}

/// Parsed inputs shared by many runs.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub scenario: Scenario,
    pub library: FrameLibrary,
}

impl RunInputs {
    pub fn load(scenario: &Path, library: &Path) -> Result<Self, RunError> {
        Ok(RunInputs {
            scenario: parse_scenario(&read(scenario)?)?,
            library: parse_frame_library(&read(library)?)?,
        })
    }

    pub fn parse(scenario: &str, library: &str) -> Result<Self, RunError> {
        Ok(RunInputs {
            scenario: parse_scenario(scenario)?,
            library: parse_frame_library(library)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub task: String,
    pub frame: String,
    pub seed: u64,
    pub mode: RunMode,
    pub status: TerminalStatus,
    pub success: bool,
    /// Replaying the trace found no frame completed ahead of a
    /// precondition.
    pub ordering_ok: bool,
    pub steps: usize,
    pub path_length: f64,
    pub frames_executed: Vec<String>,
    pub actions: Vec<String>,
    pub manipulation_actions: usize,
    /// owner -> room -> mass, at the end of the run.
    pub mass_by_room: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: ExecutionTrace,
    pub trace_text: String,
    pub metrics_text: String,
    pub beliefs: Beliefs,
    pub world: World,
}

/// Loads inputs from the configured paths, runs, and writes `trace.jsonl`,
/// `metrics.json` and (if enabled) snapshot PNGs. Nothing is written when
/// the configuration is invalid.
pub fn run_scenario(config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let inputs = RunInputs::load(&config.scenario, &config.library)?;
    let out = run_with(&inputs, config)?;
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &out, config.render)?;
    }
    Ok(out)
}

pub fn write_outputs(dir: &Path, out: &RunOutput, render: bool) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    write(&dir.join("trace.jsonl"), out.trace_text.as_bytes())?;
    write(&dir.join("metrics.json"), out.metrics_text.as_bytes())?;
    if render {
        let objects: Vec<_> = out.world.objects().cloned().collect();
        for snap in &out.trace.snapshots {
            let img = render_snapshot(out.world.map(), &objects, &snap.sets);
            let path = dir.join(format!("snapshot_{:04}.png", snap.timestep));
            save_png(&img, &path).map_err(|e| RunError::Io {
                path,
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

/// Runs on already parsed inputs without touching the file system.
pub fn run_with(inputs: &RunInputs, config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let instance = parse_command(&config.task, &inputs.library)?;
    let mut scenario = inputs.scenario.clone();
    if let Some(pose) = config.pose {
        scenario.robot = pose;
    }
    if config.holding.is_some() {
        scenario.holding = config.holding.clone();
    }
    let mut world = World::new(scenario, config.seed)?;
    let map = world.map().clone();
    let mut beliefs = Beliefs::for_task(
        &map,
        &inputs.library,
        &instance.frame,
        config.particles,
        rng::mix(config.seed, BELIEF_STREAM),
    )?;
    let header = TraceHeader {
        schema: SCHEMA.to_string(),
        version: VERSION,
        task: instance.frame.clone(),
        seed: config.seed,
        mode: config.mode.name().to_string(),
        map: map.clone(),
        objects: world.objects().cloned().collect(),
    };

    let trace = match config.mode {
        RunMode::Task => execute_frame(
            &instance,
            &mut world,
            &mut beliefs,
            &inputs.library,
            &config.params,
            &config.executor(),
            config.seed,
        ),
        RunMode::Fixed | RunMode::Tour => {
            scripted_run(&instance.frame, &mut world, &mut beliefs, &inputs.library, config)
        }
    };

    let m = trace.metrics();
    let ordering_ok = trace.verify_ordering(&inputs.library).is_ok();
    let metrics = RunMetrics {
        schema_version: VERSION,
        task: config.task.clone(),
        frame: instance.frame.clone(),
        seed: config.seed,
        mode: config.mode,
        success: m.success && ordering_ok,
        status: m.status,
        ordering_ok,
        steps: m.steps,
        path_length: m.path_length,
        frames_executed: m.frames_executed,
        actions: m.actions,
        manipulation_actions: m.manipulation_actions,
        mass_by_room: beliefs
            .sets()
            .map(|s| (s.owner().to_string(), s.mass_by_room(&map)))
            .collect(),
    };
    let mut metrics_text = serde_json::to_string_pretty(&metrics).expect("metrics are finite");
    metrics_text.push('\n');
    Ok(RunOutput {
        trace_text: write_trace(&header, &trace),
        metrics,
        metrics_text,
        trace,
        beliefs,
        world,
    })
}

/// The scripted pose sequence of a `fixed` or `tour` run, one pose per
/// timestep. A tour walks each waypoint's path in step-length increments
/// and turns in place at the waypoint.
fn scripted_poses(world: &mut World, config: &RunConfig) -> Vec<Pose> {
    let start = world.robot().pose;
    if config.mode == RunMode::Fixed {
        return vec![start; config.iterations];
    }
    let mut poses = vec![start];
    let turn = std::f64::consts::TAU / config.tour_turns as f64;
    for wp in world.waypoints().to_vec() {
        loop {
            let here = world.robot().pose.position();
            if here.distance(&wp) < 1e-9 {
                break;
            }
            let goal = Pose::at(wp, here.bearing_to(&wp));
            if step_toward(world, &goal).is_err() {
                log::warn!("tour waypoint ({}, {}) unreachable; skipped", wp.x, wp.y);
                break;
            }
            poses.push(world.robot().pose);
        }
        let base = world.robot().pose;
        for k in 1..config.tour_turns {
            poses.push(Pose::at(base.position(), base.heading + k as f64 * turn));
        }
    }
    world.set_robot_pose(start);
    poses
}

fn scripted_run(
    task: &str,
    world: &mut World,
    beliefs: &mut Beliefs,
    library: &FrameLibrary,
    config: &RunConfig,
) -> ExecutionTrace {
    let map = world.map().clone();
    let sensor = *world.sensor();
    let model = FrameModel {
        library,
        map: &map,
        params: config.params,
        pose_reach: (world.reasoning() == Reasoning::Pose).then(|| world.reach_radius()),
    };
    let poses = scripted_poses(world, config);
    let mut records = Vec::with_capacity(poses.len());
    let mut snapshots = Vec::new();
    for (t, pose) in poses.into_iter().enumerate() {
        world.set_robot_pose(pose);
        if config.snapshot_every > 0 && t % config.snapshot_every == 0 {
            snapshots.push(Snapshot {
                timestep: t,
                sets: beliefs.sets().cloned().collect(),
            });
        }
        let obs = world.observe_here();
        let state = world.robot().clone();
        let events = beliefs.step(
            std::slice::from_ref(&obs),
            &state,
            &sensor,
            &model,
            rng::mix(config.seed, t as u64),
        );
        records.push(StepRecord {
            timestep: t,
            pose,
            gripper: state.gripper.clone(),
            executed: state.executed.clone(),
            frame: Some(task.to_string()),
            mode: Mode::Observe,
            goal: None,
            outcome: None,
            detections: obs.detections.iter().map(|d| d.class.clone()).collect(),
            beliefs: beliefs.summary(),
            events: events
                .into_iter()
                .filter(|e| e.degenerate || e.reinvigorated > 0)
                .collect(),
        });
    }
    snapshots.push(Snapshot {
        timestep: records.len(),
        sets: beliefs.sets().cloned().collect(),
    });
    ExecutionTrace {
        task: task.to_string(),
        records,
        snapshots,
        // a scripted run has nothing to fail at once it has played out
        status: TerminalStatus::Success,
    }
}

// ---------------------------------------------------------------------------
// Suites

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    /// Utterances, used round-robin across trials.
    pub tasks: Vec<String>,
    pub trials: usize,
    #[serde(default)]
    pub seed_start: u64,
    pub scenario: Option<PathBuf>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Relative paths resolve against the suite file's directory. When
    /// absent the bundled apartment and library are used.
    pub scenario: Option<PathBuf>,
    pub library: Option<PathBuf>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub params: PotentialParams,
    #[serde(rename = "group")]
    pub groups: Vec<GroupConfig>,
}

fn default_particles() -> usize {
    200
}

fn default_budget() -> usize {
    ExecutorConfig::default().budget
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let suite: SuiteConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        if suite.groups.is_empty() {
            return Err(RunError::Config("suite has no groups".into()));
        }
        for g in &suite.groups {
            if g.tasks.is_empty() {
                return Err(RunError::Config(format!("group '{}' has no tasks", g.name)));
            }
        }
        Ok(suite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub group: String,
    pub seed: u64,
    pub task: String,
    pub status: TerminalStatus,
    /// Every required action completed, in order.
    pub success: bool,
    pub ordering_ok: bool,
    pub steps: usize,
    pub path_length: f64,
    pub frames_executed: Vec<String>,
    pub manipulation_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub timeouts: usize,
    pub failures: usize,
    pub ordering_violations: usize,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub groups: Vec<GroupSummary>,
    pub trials: Vec<TrialRow>,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are finite");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>6} {:>9} {:>8} {:>8} {:>9} {:>10}\n",
            "group", "trials", "success", "rate", "timeout", "failure", "mean steps"
        );
        for g in &self.groups {
            out.push_str(&format!(
                "{:<20} {:>6} {:>9} {:>8.3} {:>8} {:>9} {:>10.1}\n",
                g.group, g.trials, g.successes, g.success_rate, g.timeouts, g.failures, g.mean_steps
            ));
        }
        out
    }
}

struct GroupInputs {
    inputs: RunInputs,
    budget: usize,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs every trial of every group on a pool of `workers` threads. Trial
/// errors become failed rows; only configuration problems abort.
pub fn run_experiment_suite(
    suite: &SuiteConfig,
    base_dir: &Path,
    workers: usize,
) -> Result<SuiteReport, RunError> {
    let library = match &suite.library {
        Some(p) => parse_frame_library(&read(&resolve(base_dir, p))?)?,
        None => parse_frame_library(crate::builtin::FRAMES)?,
    };
    let default_scenario = match &suite.scenario {
        Some(p) => parse_scenario(&read(&resolve(base_dir, p))?)?,
        None => parse_scenario(crate::builtin::APARTMENT)?,
    };
    let mut groups = Vec::new();
    for g in &suite.groups {
        let scenario = match &g.scenario {
            Some(p) => parse_scenario(&read(&resolve(base_dir, p))?)?,
            None => default_scenario.clone(),
        };
        for task in &g.tasks {
            parse_command(task, &library)?;
        }
        groups.push(GroupInputs {
            inputs: RunInputs {
                scenario,
                library: library.clone(),
            },
            budget: g.budget.unwrap_or(suite.budget),
        });
    }

    let jobs: Vec<(usize, u64, &str)> = suite
        .groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| {
            (0..g.trials).map(move |i| (gi, g.seed_start + i as u64, g.tasks[i % g.tasks.len()].as_str()))
        })
        .collect();

    let run_one = |&(gi, seed, task): &(usize, u64, &str)| -> TrialRow {
        let g = &groups[gi];
        let config = RunConfig {
            task: task.to_string(),
            seed,
            mode: RunMode::Task,
            params: suite.params,
            particles: suite.particles,
            budget: g.budget,
            ..RunConfig::default()
        };
        let name = suite.groups[gi].name.clone();
        match run_with(&g.inputs, &config) {
            Ok(out) => TrialRow {
                group: name,
                seed,
                task: task.to_string(),
                status: out.metrics.status,
                success: out.metrics.success,
                ordering_ok: out.metrics.ordering_ok,
                steps: out.metrics.steps,
                path_length: out.metrics.path_length,
                frames_executed: out.metrics.frames_executed,
                manipulation_actions: out.metrics.manipulation_actions,
            },
            Err(e) => TrialRow {
                group: name,
                seed,
                task: task.to_string(),
                status: TerminalStatus::Failure {
                    reason: e.to_string(),
                },
                success: false,
                ordering_ok: true,
                steps: 0,
                path_length: 0.0,
                frames_executed: Vec::new(),
                manipulation_actions: 0,
            },
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let trials: Vec<TrialRow> = pool.install(|| jobs.par_iter().map(run_one).collect());

    let groups = suite
        .groups
        .iter()
        .map(|g| {
            let rows: Vec<&TrialRow> = trials.iter().filter(|r| r.group == g.name).collect();
            let n = rows.len();
            let successes = rows.iter().filter(|r| r.success).count();
            GroupSummary {
                group: g.name.clone(),
                trials: n,
                successes,
                success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
                timeouts: rows
                    .iter()
                    .filter(|r| r.status == TerminalStatus::Timeout)
                    .count(),
                failures: rows
                    .iter()
                    .filter(|r| matches!(r.status, TerminalStatus::Failure { .. }))
                    .count(),
                ordering_violations: rows.iter().filter(|r| !r.ordering_ok).count(),
                mean_steps: if n == 0 {
                    0.0
                } else {
                    rows.iter().map(|r| r.steps as f64).sum::<f64>() / n as f64
                },
            }
        })
        .collect();
    Ok(SuiteReport {
        schema_version: VERSION,
        groups,
        trials,
    })
}
