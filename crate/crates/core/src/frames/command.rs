//! Template matching from imperative utterances to frames.
//!
//! A frame is a candidate when one of its verbs appears in the utterance as
//! a run of consecutive words. Candidates are ranked by how many of their
//! element classes the utterance mentions ("slot words"), then by the length
//! of the matched verb phrase.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{FrameLibrary, SemanticFrame};
use super::parse::normalize_word;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInstance {
    pub frame: String,
    /// Element classes named in the utterance, in element order.
    pub slots: Vec<String>,
}

impl FrameInstance {
    pub fn new(frame: impl Into<String>) -> Self {
        FrameInstance {
            frame: frame.into(),
            slots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("no frame is evoked by {0:?}")]
    NoFrameEvoked(String),
    #[error("utterance evokes several frames equally well: {}", .0.join(", "))]
    AmbiguousEvocation(Vec<String>),
}

fn words(text: &str) -> Vec<String> {
    normalize_word(text)
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &[&str]) -> bool {
    !phrase.is_empty()
        && haystack
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

fn best_verb_len(frame: &SemanticFrame, utterance: &[String]) -> Option<usize> {
    frame
        .verbs
        .iter()
        .map(|v| v.split('_').filter(|w| !w.is_empty()).collect::<Vec<_>>())
        .filter(|phrase| contains_phrase(utterance, phrase))
        .map(|phrase| phrase.len())
        .max()
}

pub fn parse_command(utterance: &str, library: &FrameLibrary) -> Result<FrameInstance, CommandError> {
    let tokens = words(utterance);
    let mut best: Vec<(usize, usize, &SemanticFrame, Vec<String>)> = Vec::new();
    for frame in library.frames() {
        let Some(verb_len) = best_verb_len(frame, &tokens) else {
            continue;
        };
        let slots: Vec<String> = frame
            .elements
            .iter()
            .filter(|e| {
                let phrase: Vec<&str> = e.object_class.split('_').filter(|w| !w.is_empty()).collect();
                contains_phrase(&tokens, &phrase)
            })
            .map(|e| e.object_class.clone())
            .collect();
        best.push((slots.len(), verb_len, frame, slots));
    }
    let Some(top) = best.iter().map(|(s, v, _, _)| (*s, *v)).max() else {
        return Err(CommandError::NoFrameEvoked(utterance.to_string()));
    };
    let mut winners: Vec<_> = best.into_iter().filter(|(s, v, _, _)| (*s, *v) == top).collect();
    if winners.len() > 1 {
        return Err(CommandError::AmbiguousEvocation(
            winners.iter().map(|(_, _, f, _)| f.id.clone()).collect(),
        ));
    }
    let (_, _, frame, slots) = winners.pop().unwrap();
    Ok(FrameInstance {
        frame: frame.id.clone(),
        slots,
    })
}
