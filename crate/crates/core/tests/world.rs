use framemap::builtin;
use framemap::frames::{parse_frame_library, FrameInstance, FrameLibrary};
use framemap::world::{load_scenario, ObjectLocation, World};
use proptest::prelude::*;

fn library() -> FrameLibrary {
    parse_frame_library(builtin::FRAMES).unwrap()
}

/// One scripted move: pick a frame and one of its actions, optionally
/// teleporting to a pose that affords it first.
type Move = (prop::sample::Index, prop::sample::Index, bool);

fn moves() -> impl Strategy<Value = Vec<Move>> {
    prop::collection::vec(
        (
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
            any::<bool>(),
        ),
        1..40,
    )
}

fn conserved(world: &World) -> bool {
    let held: Vec<_> = world
        .objects()
        .filter(|o| o.location == ObjectLocation::Gripper)
        .map(|o| o.class.clone())
        .collect();
    held.len() <= 1 && held.first() == world.robot().gripper.as_ref()
}

/// Plays `script` and returns a textual log of everything observable.
fn play(seed: u64, script: &[Move], lib: &FrameLibrary, check: &mut dyn FnMut(&World, bool, &str)) -> String {
    let mut world = load_scenario(builtin::APARTMENT, seed).unwrap();
    let mut log = String::new();
    for (frame, action, teleport) in script {
        let frame = &lib.frames()[frame.index(lib.len())];
        let action = &frame.actions[action.index(frame.actions.len())];
        let instance = FrameInstance::new(frame.id.clone());
        if *teleport {
            if let Ok(pose) = world.ground_truth_afforded_pose(&instance, lib) {
                world.set_robot_pose(pose);
            }
        }
        let result = world.execute_primitive(action, &instance, lib);
        let completed = matches!(&result, Ok(r) if r.completed_frame);
        check(&world, completed, &frame.id);
        let obs = world.observe_here();
        log += &format!("{result:?}\n{}\n", serde_json::to_string(&obs).unwrap());
    }
    log += &format!("{:?}\n", world.robot());
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objects_are_either_on_the_map_or_in_the_gripper(seed in any::<u64>(), script in moves()) {
        let lib = library();
        let mut ok = true;
        play(seed, &script, &lib, &mut |w, _, _| ok &= conserved(w));
        prop_assert!(ok);
    }

    #[test]
    fn completed_frames_leave_their_effects(seed in any::<u64>(), script in moves()) {
        let lib = library();
        let mut broken = Vec::new();
        play(seed, &script, &lib, &mut |w, completed, id| {
            if completed && !w.postconditions_hold(lib.get(id).unwrap()) {
                broken.push(id.to_string());
            }
        });
        prop_assert!(broken.is_empty(), "{broken:?}");
    }

    #[test]
    fn replays_are_identical(seed in any::<u64>(), script in moves()) {
        let lib = library();
        let a = play(seed, &script, &lib, &mut |_, _, _| {});
        let b = play(seed, &script, &lib, &mut |_, _, _| {});
        prop_assert_eq!(a, b);
    }

    #[test]
    fn placements_stay_in_free_space(seed in any::<u64>()) {
        let world = load_scenario(builtin::APARTMENT, seed).unwrap();
        for o in world.objects() {
            let p = o.position().unwrap();
            prop_assert!(world.map().is_free(&p), "{} at {p:?}", o.class);
        }
    }
}

#[test]
fn full_stir_sequence_succeeds_with_ground_truth_poses() {
    let lib = library();
    let mut world = load_scenario(builtin::APARTMENT, 7).unwrap();
    for id in ["grasp_spoon", "stir_cup"] {
        let instance = FrameInstance::new(id);
        let frame = lib.get(id).unwrap();
        for action in &frame.actions {
            let pose = world.ground_truth_afforded_pose(&instance, &lib).unwrap();
            world.set_robot_pose(pose);
            let r = world.execute_primitive(action, &instance, &lib).unwrap();
            assert!(r.success, "{id}/{action}");
        }
        assert!(world.postconditions_hold(frame));
    }
    assert_eq!(world.robot().executed, ["grasp_spoon", "stir_cup"]);
    assert!(world.object("cup").unwrap().flags.contains("stirred"));
}

#[test]
fn observing_from_the_corner_sees_nothing() {
    let mut world = load_scenario(builtin::APARTMENT, 3).unwrap();
    let obs = world.observe(&builtin::BLIND_POSE);
    assert!(obs.detections.is_empty(), "{:?}", obs.detections);
}
