//! Scenario documents.
//!
//! ```text
//! map
//!   bounds: 0 0 12 8
//!   room kitchen: 0 0 4 4          # axis-aligned rectangle x0 y0 x1 y1
//!   room hall poly: 4 0 6 0 6 8 4 8  # polygon vertices
//!   obstacle: 3.9 1 4.1 4
//! end
//! prior spoon kitchen 0.7
//! object spoon 2.1 3.4             # fixed position
//! object cup in living             # drawn uniformly from the room per seed
//! robot 6 4 0 holding spoon        # x y heading [holding class]
//! sensor range 5 fov 2.0944 noise 0.15 miss 0.05
//! reach 0.8
//! step 0.25
//! success pick 0.9
//! reasoning pose                   # `location` (default) or `pose`
//! waypoint 2 2                     # scripted tour, in order
//! ```

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::map::{Room, SensorModel, WorldMap};
use crate::dsl::{self, format_number, Line, SyntaxError, Token};
use crate::geometry::{Point, Polygon, Pose, Rect};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("geometry error on line {line}: {message}")]
    Geometry { line: usize, message: String },
}

impl ScenarioError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::Syntax(_) => "syntax",
            ScenarioError::Geometry { .. } => "geometry",
        }
    }
}

fn geometry(line: &Line<'_>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Geometry {
        line: line.number,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    At { position: Point },
    InRoom { room: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: String,
    pub placement: Placement,
}

/// What frame particles stand for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reasoning {
    /// Where the afforded action happens.
    #[default]
    Location,
    /// Robot positions from which the action can be carried out.
    Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub map: WorldMap,
    pub objects: Vec<ObjectSpec>,
    pub robot: Pose,
    pub holding: Option<String>,
    pub sensor: SensorModel,
    pub reach_radius: f64,
    pub step_length: f64,
    /// Per-action success probability; unlisted actions always succeed.
    pub success: BTreeMap<String, f64>,
    pub reasoning: Reasoning,
    pub waypoints: Vec<Point>,
}

pub const DEFAULT_REACH: f64 = 0.8;
pub const DEFAULT_STEP: f64 = 0.25;

pub fn parse_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let lines = dsl::lex(source);
    let mut i = 0;
    let mut map: Option<WorldMap> = None;
    let mut priors: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut prior_lines: Vec<(usize, String, String)> = Vec::new();
    let mut objects: Vec<(usize, ObjectSpec)> = Vec::new();
    let mut robot: Option<(usize, Pose, Option<String>)> = None;
    let mut sensor: Option<SensorModel> = None;
    let mut reach: Option<f64> = None;
    let mut step: Option<f64> = None;
    let mut success = BTreeMap::new();
    let mut reasoning: Option<Reasoning> = None;
    let mut waypoints: Vec<(usize, Point)> = Vec::new();

    let once = |present: bool, tok: &Token<'_>| -> Result<(), SyntaxError> {
        if present {
            Err(SyntaxError::at(
                tok,
                format!("'{}' given more than once", tok.text),
            ))
        } else {
            Ok(())
        }
    };

    while i < lines.len() {
        let line = &lines[i];
        let head = line.head();
        let args = &line.tokens[1..];
        match head.text {
            "map" => {
                once(map.is_some(), head)?;
                if let Some(t) = args.first() {
                    return Err(SyntaxError::at(t, "unexpected token after 'map'").into());
                }
                let end = lines[i + 1..]
                    .iter()
                    .position(|l| l.head().text == "end")
                    .map(|p| p + i + 1)
                    .ok_or_else(|| lines.last().unwrap().error_at_end("map block is missing 'end'"))?;
                if let Some(t) = lines[end].tokens.get(1) {
                    return Err(SyntaxError::at(t, "unexpected token after 'end'").into());
                }
                map = Some(parse_map(line, &lines[i + 1..end])?);
                i = end + 1;
                continue;
            }
            "prior" => {
                let [class, room, mass] = args else {
                    return Err(SyntaxError::at(head, "expected 'prior <class> <room> <mass>'").into());
                };
                let class = dsl::identifier(class)?;
                let room_name = dsl::identifier(room)?;
                let m = dsl::finite(mass)?;
                if !(0.0..=1.0).contains(&m) {
                    return Err(SyntaxError::at(mass, "prior mass must lie in [0, 1]").into());
                }
                let entry = priors.entry(class.to_string()).or_default();
                if entry.iter().any(|(r, _)| r == room_name) {
                    return Err(
                        SyntaxError::at(room, format!("duplicate prior for {class} in {room_name}")).into(),
                    );
                }
                entry.push((room_name.to_string(), m));
                if entry.iter().map(|(_, m)| m).sum::<f64>() > 1.0 + 1e-9 {
                    return Err(SyntaxError::at(mass, format!("prior masses for '{class}' exceed 1")).into());
                }
                prior_lines.push((line.number, class.to_string(), room_name.to_string()));
            }
            "object" => {
                let class_tok = args
                    .first()
                    .ok_or_else(|| line.error_at_end("expected an object class"))?;
                let class = dsl::identifier(class_tok)?;
                if objects.iter().any(|(_, o)| o.class == class) {
                    return Err(
                        SyntaxError::at(class_tok, format!("object '{class}' declared twice")).into(),
                    );
                }
                let placement = match &args[1..] {
                    [kw, room] if kw.text == "in" => Placement::InRoom {
                        room: dsl::identifier(room)?.to_string(),
                    },
                    [x, y] => Placement::At {
                        position: Point::new(dsl::finite(x)?, dsl::finite(y)?),
                    },
                    _ => return Err(SyntaxError::at(class_tok, "expected '<x> <y>' or 'in <room>'").into()),
                };
                objects.push((
                    line.number,
                    ObjectSpec {
                        class: class.to_string(),
                        placement,
                    },
                ));
            }
            "robot" => {
                once(robot.is_some(), head)?;
                let (pose, holding) = match args {
                    [x, y, h] => (Pose::new(dsl::finite(x)?, dsl::finite(y)?, dsl::finite(h)?), None),
                    [x, y, h, kw, class] if kw.text == "holding" => (
                        Pose::new(dsl::finite(x)?, dsl::finite(y)?, dsl::finite(h)?),
                        Some(dsl::identifier(class)?.to_string()),
                    ),
                    _ => {
                        return Err(SyntaxError::at(
                            head,
                            "expected 'robot <x> <y> <heading> [holding <class>]'",
                        )
                        .into())
                    }
                };
                robot = Some((line.number, pose, holding));
            }
            "sensor" => {
                once(sensor.is_some(), head)?;
                sensor = Some(parse_sensor(line)?);
            }
            "reach" | "step" => {
                let [v] = args else {
                    return Err(SyntaxError::at(head, format!("expected '{} <meters>'", head.text)).into());
                };
                let value = dsl::finite(v)?;
                if value <= 0.0 {
                    return Err(SyntaxError::at(v, "must be positive").into());
                }
                if head.text == "reach" {
                    once(reach.is_some(), head)?;
                    reach = Some(value);
                } else {
                    once(step.is_some(), head)?;
                    step = Some(value);
                }
            }
            "success" => {
                let [action, p] = args else {
                    return Err(SyntaxError::at(head, "expected 'success <action> <probability>'").into());
                };
                let action = dsl::identifier(action)?;
                let prob = dsl::finite(p)?;
                if !(0.0..=1.0).contains(&prob) {
                    return Err(SyntaxError::at(p, "probability must lie in [0, 1]").into());
                }
                if success.insert(action.to_string(), prob).is_some() {
                    return Err(
                        SyntaxError::at(head, format!("duplicate success entry for '{action}'")).into(),
                    );
                }
            }
            "reasoning" => {
                once(reasoning.is_some(), head)?;
                reasoning = Some(match args {
                    [t] if t.text == "location" => Reasoning::Location,
                    [t] if t.text == "pose" => Reasoning::Pose,
                    _ => return Err(SyntaxError::at(head, "expected 'reasoning location|pose'").into()),
                });
            }
            "waypoint" => {
                let [x, y] = args else {
                    return Err(SyntaxError::at(head, "expected 'waypoint <x> <y>'").into());
                };
                waypoints.push((line.number, Point::new(dsl::finite(x)?, dsl::finite(y)?)));
            }
            other => return Err(SyntaxError::at(head, format!("unknown directive '{other}'")).into()),
        }
        i += 1;
    }

    let mut map = map.ok_or_else(|| SyntaxError::new(1, 1, "scenario has no map block"))?;
    let (robot_line, robot_pose, holding) =
        robot.ok_or_else(|| SyntaxError::new(1, 1, "scenario has no robot line"))?;

    let line_of = |n: usize| lines.iter().find(|l| l.number == n).unwrap();
    for (n, class, room) in &prior_lines {
        if map.room(room).is_none() {
            let l = line_of(*n);
            return Err(SyntaxError::at(
                &l.tokens[2],
                format!("prior for '{class}' names unknown room '{room}'"),
            )
            .into());
        }
    }
    map.priors = priors;

    for (n, obj) in &objects {
        let l = line_of(*n);
        match &obj.placement {
            Placement::At { position } => {
                if !map.bounds.contains(position) {
                    return Err(geometry(
                        l,
                        format!("object '{}' lies outside the map", obj.class),
                    ));
                }
                if map.in_obstacle(position) {
                    return Err(geometry(
                        l,
                        format!("object '{}' lies inside an obstacle", obj.class),
                    ));
                }
            }
            Placement::InRoom { room } => {
                if map.room(room).is_none() {
                    return Err(SyntaxError::at(&l.tokens[3], format!("unknown room '{room}'")).into());
                }
            }
        }
    }
    if !map.is_free(&robot_pose.position()) {
        return Err(geometry(line_of(robot_line), "robot starts outside free space"));
    }
    if let Some(held) = &holding {
        if objects.iter().any(|(_, o)| &o.class == held) {
            return Err(geometry(
                line_of(robot_line),
                format!("'{held}' cannot be both held and placed on the map"),
            ));
        }
    }
    for (n, w) in &waypoints {
        if !map.is_free(w) {
            return Err(geometry(line_of(*n), "waypoint outside free space"));
        }
    }

    Ok(Scenario {
        map,
        objects: objects.into_iter().map(|(_, o)| o).collect(),
        robot: robot_pose,
        holding,
        sensor: sensor.unwrap_or_default(),
        reach_radius: reach.unwrap_or(DEFAULT_REACH),
        step_length: step.unwrap_or(DEFAULT_STEP),
        success,
        reasoning: reasoning.unwrap_or_default(),
        waypoints: waypoints.into_iter().map(|(_, w)| w).collect(),
    })
}

fn coords(tokens: &[Token<'_>]) -> Result<Vec<Point>, SyntaxError> {
    let nums: Vec<f64> = tokens.iter().map(dsl::finite).collect::<Result<_, _>>()?;
    Ok(nums.chunks(2).map(|c| Point::new(c[0], c[1])).collect())
}

/// `rest` after the name: either `: x0 y0 x1 y1` or `poly : x y x y ...`.
fn parse_shape(line: &Line<'_>, from: usize) -> Result<Polygon, ScenarioError> {
    let (is_poly, colon_at) = match line.tokens.get(from) {
        Some(t) if t.text == "poly" => (true, from + 1),
        _ => (false, from),
    };
    let rest = line.after_colon(colon_at)?;
    if rest.len() % 2 != 0 || rest.is_empty() {
        return Err(line.error_at_end("expected an even number of coordinates").into());
    }
    let pts = coords(rest)?;
    let shape = if is_poly {
        Polygon::new(pts)
    } else if pts.len() == 2 {
        let r = Rect::from_corners(pts[0], pts[1]);
        (r.area() > 0.0).then(|| Polygon::rectangle(r))
    } else {
        return Err(SyntaxError::at(&rest[0], "rectangle needs exactly 'x0 y0 x1 y1'").into());
    };
    shape.ok_or_else(|| geometry(line, "degenerate shape"))
}

fn parse_map(open: &Line<'_>, body: &[Line<'_>]) -> Result<WorldMap, ScenarioError> {
    let mut bounds: Option<Rect> = None;
    let mut rooms: Vec<(usize, Room)> = Vec::new();
    let mut obstacles: Vec<(usize, Polygon)> = Vec::new();
    for line in body {
        let head = line.head();
        match head.text {
            "bounds" => {
                if bounds.is_some() {
                    return Err(SyntaxError::at(head, "'bounds' given more than once").into());
                }
                let rest = line.after_colon(1)?;
                if rest.len() != 4 {
                    return Err(SyntaxError::at(head, "expected 'bounds: x0 y0 x1 y1'").into());
                }
                let pts = coords(rest)?;
                let r = Rect::from_corners(pts[0], pts[1]);
                if r.area() <= 0.0 {
                    return Err(geometry(line, "map bounds have zero area"));
                }
                bounds = Some(r);
            }
            "room" => {
                let name_tok = line
                    .tokens
                    .get(1)
                    .ok_or_else(|| line.error_at_end("expected a room name"))?;
                let name = dsl::identifier(name_tok)?;
                if rooms.iter().any(|(_, r)| r.name == name) {
                    return Err(SyntaxError::at(name_tok, format!("room '{name}' declared twice")).into());
                }
                let shape = parse_shape(line, 2)?;
                rooms.push((
                    line.number,
                    Room {
                        name: name.to_string(),
                        shape,
                    },
                ));
            }
            "obstacle" => obstacles.push((line.number, parse_shape(line, 1)?)),
            other => return Err(SyntaxError::at(head, format!("unknown map key '{other}'")).into()),
        }
    }
    let bounds = bounds.ok_or_else(|| open.error_at_end("map block has no bounds"))?;
    let line_of = |n: usize| body.iter().find(|l| l.number == n).unwrap();
    for (n, room) in &rooms {
        if !bounds.contains_rect(&room.shape.bounding_box()) {
            return Err(geometry(
                line_of(*n),
                format!("room '{}' extends past the map bounds", room.name),
            ));
        }
    }
    for (n, obs) in &obstacles {
        if !bounds.contains_rect(&obs.bounding_box()) {
            return Err(geometry(line_of(*n), "obstacle extends past the map bounds"));
        }
    }
    Ok(WorldMap {
        bounds,
        rooms: rooms.into_iter().map(|(_, r)| r).collect(),
        priors: BTreeMap::new(),
        obstacles: obstacles.into_iter().map(|(_, o)| o).collect(),
    })
}

fn parse_sensor(line: &Line<'_>) -> Result<SensorModel, SyntaxError> {
    let mut sensor = SensorModel::default();
    let args = &line.tokens[1..];
    if args.is_empty() || args.len() % 2 != 0 {
        return Err(line.error_at_end("expected 'sensor <key> <value> ...'"));
    }
    let mut seen = HashSet::new();
    for pair in args.chunks(2) {
        let (key, value) = (&pair[0], &pair[1]);
        if !seen.insert(key.text) {
            return Err(SyntaxError::at(
                key,
                format!("duplicate sensor key '{}'", key.text),
            ));
        }
        let v = dsl::finite(value)?;
        match key.text {
            "range" if v > 0.0 => sensor.range = v,
            "fov" if v > 0.0 && v <= 2.0 * std::f64::consts::PI => sensor.fov = v,
            "noise" if v >= 0.0 => sensor.noise = v,
            "miss" if (0.0..=1.0).contains(&v) => sensor.miss_rate = v,
            "range" | "fov" | "noise" | "miss" => {
                return Err(SyntaxError::at(
                    value,
                    format!("value out of range for '{}'", key.text),
                ))
            }
            other => return Err(SyntaxError::at(key, format!("unknown sensor key '{other}'"))),
        }
    }
    Ok(sensor)
}

fn shape_text(shape: &Polygon) -> String {
    match shape.as_rect() {
        Some(r) => format!(
            ": {} {} {} {}",
            format_number(r.min.x),
            format_number(r.min.y),
            format_number(r.max.x),
            format_number(r.max.y)
        ),
        None => {
            let nums: Vec<String> = shape
                .vertices()
                .iter()
                .flat_map(|v| [format_number(v.x), format_number(v.y)])
                .collect();
            format!(" poly: {}", nums.join(" "))
        }
    }
}

/// Canonical text form; defaults are written out explicitly.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::from("map\n");
    let b = &s.map.bounds;
    out.push_str(&format!(
        "  bounds: {} {} {} {}\n",
        format_number(b.min.x),
        format_number(b.min.y),
        format_number(b.max.x),
        format_number(b.max.y)
    ));
    for room in &s.map.rooms {
        out.push_str(&format!("  room {}{}\n", room.name, shape_text(&room.shape)));
    }
    for obs in &s.map.obstacles {
        out.push_str(&format!("  obstacle{}\n", shape_text(obs)));
    }
    out.push_str("end\n");
    for (class, rooms) in &s.map.priors {
        for (room, mass) in rooms {
            out.push_str(&format!("prior {class} {room} {}\n", format_number(*mass)));
        }
    }
    for obj in &s.objects {
        match &obj.placement {
            Placement::At { position } => out.push_str(&format!(
                "object {} {} {}\n",
                obj.class,
                format_number(position.x),
                format_number(position.y)
            )),
            Placement::InRoom { room } => out.push_str(&format!("object {} in {room}\n", obj.class)),
        }
    }
    out.push_str(&format!(
        "robot {} {} {}",
        format_number(s.robot.x),
        format_number(s.robot.y),
        format_number(s.robot.heading)
    ));
    if let Some(h) = &s.holding {
        out.push_str(&format!(" holding {h}"));
    }
    out.push('\n');
    out.push_str(&format!(
        "sensor range {} fov {} noise {} miss {}\n",
        format_number(s.sensor.range),
        format_number(s.sensor.fov),
        format_number(s.sensor.noise),
        format_number(s.sensor.miss_rate)
    ));
    out.push_str(&format!("reach {}\n", format_number(s.reach_radius)));
    out.push_str(&format!("step {}\n", format_number(s.step_length)));
    for (action, p) in &s.success {
        out.push_str(&format!("success {action} {}\n", format_number(*p)));
    }
    let reasoning = match s.reasoning {
        Reasoning::Location => "location",
        Reasoning::Pose => "pose",
    };
    out.push_str(&format!("reasoning {reasoning}\n"));
    for w in &s.waypoints {
        out.push_str(&format!(
            "waypoint {} {}\n",
            format_number(w.x),
            format_number(w.y)
        ));
    }
    out
}
