use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// What the robot knows about itself: where it is, what it holds and which
/// frames it has completed. This is the conditioning vector for every
/// relation belief.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub gripper: Option<String>,
    pub executed: Vec<String>,
}

impl RobotState {
    pub fn new(pose: Pose) -> Self {
        RobotState {
            pose,
            gripper: None,
            executed: Vec::new(),
        }
    }

    pub fn holding(mut self, class: impl Into<String>) -> Self {
        self.gripper = Some(class.into());
        self
    }

    pub fn has_executed(&self, frame_id: &str) -> bool {
        self.executed.iter().any(|f| f == frame_id)
    }

    /// Appends `frame_id` to the history unless it is already there.
    pub fn record_executed(&mut self, frame_id: &str) {
        if !self.has_executed(frame_id) {
            self.executed.push(frame_id.to_string());
        }
    }
}
