//! Semantic frames: the data model, the definition-file format, command
//! templates and state-conditioned relation beliefs.

mod command;
mod model;
mod parse;
mod relation;

pub use command::{parse_command, CommandError, FrameInstance};
pub use model::*;
pub use parse::{normalize_word, parse_frame_library, serialize_frame_library, validate, LibraryError};
pub use relation::{ElementBelief, PreconditionBelief, RelationDistribution, RelationKind};
