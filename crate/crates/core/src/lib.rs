pub mod builtin;
pub mod dsl;
pub mod experiment;
pub mod frames;
pub mod geometry;
pub mod inference;
pub mod planner;
pub mod render;
pub mod rng;
pub mod state;
pub mod trace;
pub mod world;
