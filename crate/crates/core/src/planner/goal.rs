use serde::{Deserialize, Serialize};

use super::mixture::GaussianMixture;
use super::PlannerError;
use crate::geometry::{Point, Pose};
use crate::world::{NavGrid, SensorModel, WorldMap};

/// Viewpoints sit at this fraction of sensor range from their target.
pub const VIEW_FRACTION: f64 = 0.8;

const RING_ANGLES: usize = 32;
const RING_FRACTIONS: [f64; 6] = [0.8, 0.6, 0.4, 0.2, 0.1, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavigationGoal {
    pub pose: Pose,
    /// Index of the chosen mixture component.
    pub component: usize,
    /// The component mean the pose observes.
    pub target: Point,
    /// The target is already in view from the robot's pose.
    pub noop: bool,
}

/// Highest-weight component; equal weights go to the mean nearest the robot.
pub fn select_component(mixture: &GaussianMixture, robot: &Point) -> Option<usize> {
    const TIE: f64 = 1e-12;
    let mut best: Option<usize> = None;
    for (i, c) in mixture.components.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let bc = &mixture.components[b];
                c.weight > bc.weight + TIE
                    || ((c.weight - bc.weight).abs() <= TIE
                        && c.mean.distance_sq(robot) < bc.mean.distance_sq(robot))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Pose from which the robot can observe the chosen component's mean: the
/// current pose if it already sees it, else the point on the line toward
/// the robot at 0.8 range, else the nearest clear point on rings around
/// the mean.
pub fn select_navigation_goal(
    mixture: &GaussianMixture,
    map: &WorldMap,
    nav: &NavGrid,
    robot: &Pose,
    sensor: &SensorModel,
) -> Result<NavigationGoal, PlannerError> {
    let here = robot.position();
    let component = select_component(mixture, &here).ok_or(PlannerError::EmptyMixture)?;
    let target = mixture.components[component].mean;
    let goal = |pose: Pose, noop: bool| NavigationGoal {
        pose,
        component,
        target,
        noop,
    };

    if sensor.can_see(map, robot, &target) && here.distance(&target) <= VIEW_FRACTION * sensor.range {
        return Ok(goal(*robot, true));
    }
    let reach = VIEW_FRACTION * sensor.range;
    let viewable = |c: &Point| {
        map.is_free(c)
            && c.distance(&target) <= reach + 1e-9
            && map.line_of_sight(c, &target)
            && nav.connected(map, &here, c)
    };

    let d = here.distance(&target);
    if d > 0.0 {
        let along = target.lerp(&here, d.min(reach) / d);
        if viewable(&along) {
            return Ok(goal(Pose::facing(along, &target), false));
        }
    }

    let mut best: Option<(f64, Point)> = None;
    for frac in RING_FRACTIONS {
        let r = frac * sensor.range;
        for k in 0..RING_ANGLES {
            let a = k as f64 * std::f64::consts::TAU / RING_ANGLES as f64;
            let c = Point::new(target.x + r * a.cos(), target.y + r * a.sin());
            if !viewable(&c) {
                continue;
            }
            let cost = c.distance(&here);
            if best.is_none_or(|(b, _)| cost < b) {
                best = Some((cost, c));
            }
        }
        if best.is_some() {
            break;
        }
    }
    match best {
        Some((_, c)) => Ok(goal(Pose::facing(c, &target), false)),
        None => Err(PlannerError::NoReachableViewpoint(target)),
    }
}
