//! The bundled apartment scenario, frame library and suite.

/// Apartment with kitchen, dining, living, bedroom and hall.
pub const APARTMENT: &str = include_str!("../data/apartment.scn");
pub const FRAMES: &str = include_str!("../data/frames.lib");
pub const SUITE: &str = include_str!("../data/suite.toml");

/// Bedroom corner facing the outer wall: sees no prior room.
pub const BLIND_POSE: crate::geometry::Pose = crate::geometry::Pose {
    x: 0.4,
    y: 7.6,
    heading: std::f64::consts::PI,
};
