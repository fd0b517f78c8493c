use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Relation between a frame and one of the object classes it mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The next object the robot must interact with.
    Core,
    /// Needed later, or optional.
    Other,
    /// Not involved at this stage.
    Disjoint,
}

impl Role {
    pub fn keyword(self) -> &'static str {
        match self {
            Role::Core => "core",
            Role::Other => "other",
            Role::Disjoint => "disjoint",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Role> {
        match s {
            "core" => Some(Role::Core),
            "other" => Some(Role::Other),
            "disjoint" => Some(Role::Disjoint),
            _ => None,
        }
    }
}

/// Relation between a frame and another frame of the same library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextRole {
    Precondition,
    Disjoint,
}

/// Piecewise-constant map from precondition progress (stage) to role.
///
/// Stored as breakpoints sorted by stage, the first one always at stage 0;
/// a stage takes the role of the last breakpoint at or below it, so every
/// stage has exactly one role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSchedule {
    breakpoints: Vec<(usize, Role)>,
}

impl RoleSchedule {
    /// Sorts the breakpoints; fails on an empty list, a missing stage 0 or a
    /// repeated stage.
    pub fn new(mut breakpoints: Vec<(usize, Role)>) -> Result<Self, String> {
        breakpoints.sort_by_key(|(stage, _)| *stage);
        if breakpoints.first().map(|(s, _)| *s) != Some(0) {
            return Err("role schedule must define stage 0".into());
        }
        if breakpoints.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err("role schedule repeats a stage".into());
        }
        Ok(RoleSchedule { breakpoints })
    }

    pub fn constant(role: Role) -> Self {
        RoleSchedule {
            breakpoints: vec![(0, role)],
        }
    }

    pub fn role_at(&self, stage: usize) -> Role {
        self.breakpoints
            .iter()
            .rev()
            .find(|(s, _)| *s <= stage)
            .map(|(_, r)| *r)
            .expect("schedule always has a stage-0 entry")
    }

    pub fn breakpoints(&self) -> &[(usize, Role)] {
        &self.breakpoints
    }

    pub fn last_stage(&self) -> usize {
        self.breakpoints.last().map(|(s, _)| *s).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameElement {
    pub object_class: String,
    pub roles: RoleSchedule,
}

impl FrameElement {
    pub fn new(object_class: impl Into<String>, roles: RoleSchedule) -> Self {
        FrameElement {
            object_class: object_class.into(),
            roles,
        }
    }
}

/// State change declared by a frame for a successful execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateEffect {
    GripperSet {
        object: String,
    },
    GripperClear,
    /// `object` ends up at `destination`'s location and leaves the gripper
    /// if it was held.
    ObjectMovedTo {
        object: String,
        destination: String,
    },
    ObjectStateFlag {
        object: String,
        flag: String,
    },
}

impl StateEffect {
    /// Effects that can be checked against the robot state alone.
    pub fn is_gripper_effect(&self) -> bool {
        matches!(self, StateEffect::GripperSet { .. } | StateEffect::GripperClear)
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            StateEffect::GripperSet { .. } => "gripper_set",
            StateEffect::GripperClear => "gripper_clear",
            StateEffect::ObjectMovedTo { .. } => "object_moved_to",
            StateEffect::ObjectStateFlag { .. } => "object_state_flag",
        }
    }

    pub fn arguments(&self) -> Vec<&str> {
        match self {
            StateEffect::GripperSet { object } => vec![object],
            StateEffect::GripperClear => vec![],
            StateEffect::ObjectMovedTo { object, destination } => vec![object, destination],
            StateEffect::ObjectStateFlag { object, flag } => vec![object, flag],
        }
    }
}

impl fmt::Display for StateEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())?;
        for arg in self.arguments() {
            write!(f, " {arg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Permanence {
    Static,
    /// `sigma` overrides the configured per-step prediction noise.
    Movable {
        sigma: Option<f64>,
    },
}

/// A verb-evoked action template: the objects it needs, the frames that
/// must complete first, the primitives that carry it out and the state
/// change it leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFrame {
    pub id: String,
    pub verbs: Vec<String>,
    pub elements: Vec<FrameElement>,
    pub preconditions: Vec<String>,
    pub actions: Vec<String>,
    pub postconditions: Vec<StateEffect>,
    pub permanence: Permanence,
}

impl SemanticFrame {
    pub fn element(&self, object_class: &str) -> Option<&FrameElement> {
        self.elements.iter().find(|e| e.object_class == object_class)
    }

    /// Element classes with role Core at `stage`.
    pub fn core_classes(&self, stage: usize) -> impl Iterator<Item = &str> {
        self.elements
            .iter()
            .filter(move |e| e.roles.role_at(stage) == Role::Core)
            .map(|e| e.object_class.as_str())
    }
}

/// Validated, immutable collection of frames in declaration order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FrameLibrary {
    frames: Vec<SemanticFrame>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for FrameLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.frames == other.frames
    }
}

impl FrameLibrary {
    /// Callers must have validated `frames`; see [`super::validate`].
    pub(crate) fn from_validated(frames: Vec<SemanticFrame>) -> Self {
        let index = frames
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), i))
            .collect();
        FrameLibrary { frames, index }
    }

    pub fn get(&self, id: &str) -> Option<&SemanticFrame> {
        self.index.get(id).map(|&i| &self.frames[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn frames(&self) -> &[SemanticFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Every object class mentioned by any frame, sorted.
    pub fn object_classes(&self) -> Vec<String> {
        let mut classes: Vec<String> = self
            .frames
            .iter()
            .flat_map(|f| f.elements.iter().map(|e| e.object_class.clone()))
            .collect();
        classes.sort();
        classes.dedup();
        classes
    }

    /// `id` followed by its transitive preconditions, depth first, each once.
    pub fn closure(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![id.to_string()];
        while let Some(next) = stack.pop() {
            if out.contains(&next) {
                continue;
            }
            if let Some(frame) = self.get(&next) {
                stack.extend(frame.preconditions.iter().rev().cloned());
            }
            out.push(next);
        }
        out
    }
}
