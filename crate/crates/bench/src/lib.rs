//! Shared fixtures for the benchmarks: the bundled apartment and library
//! with beliefs initialized for a task.

use framemap::builtin;
use framemap::frames::{parse_command, parse_frame_library, FrameInstance, FrameLibrary};
use framemap::inference::Beliefs;
use framemap::world::{load_scenario, World};

pub struct Fixture {
    pub world: World,
    pub library: FrameLibrary,
    pub task: FrameInstance,
    pub beliefs: Beliefs,
}

pub fn apartment(utterance: &str, particles: usize, seed: u64) -> Fixture {
    let library = parse_frame_library(builtin::FRAMES).expect("bundled library parses");
    let world = load_scenario(builtin::APARTMENT, seed).expect("bundled scenario loads");
    let task = parse_command(utterance, &library).expect("utterance names a frame");
    let beliefs =
        Beliefs::for_task(world.map(), &library, &task.frame, particles, seed).expect("beliefs initialize");
    Fixture {
        world,
        library,
        task,
        beliefs,
    }
}
