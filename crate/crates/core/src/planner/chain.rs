use crate::frames::{FrameInstance, FrameLibrary};
use crate::state::RobotState;

/// Depth-first linearization of the task's unmet preconditions, ending
/// with the task frame itself. Satisfied preconditions are left out, and a
/// frame reached along two routes appears once, at its first position.
pub fn plan_precondition_chain(
    task: &FrameInstance,
    state: &RobotState,
    library: &FrameLibrary,
) -> Vec<String> {
    let mut chain = Vec::new();
    visit(&task.frame, state, library, &mut chain);
    chain
}

fn visit(id: &str, state: &RobotState, library: &FrameLibrary, chain: &mut Vec<String>) {
    if chain.iter().any(|c| c == id) {
        return;
    }
    let Some(frame) = library.get(id) else {
        return;
    };
    let stage = library.stage(frame, state);
    for pre in &frame.preconditions[stage..] {
        if !library.is_satisfied(pre, state) {
            visit(pre, state, library, chain);
        }
    }
    chain.push(id.to_string());
}
