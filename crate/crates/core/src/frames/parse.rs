//! Reader and writer for the frame-definition format.
//!
//! ```text
//! frame stir_cup
//!   verbs: stir
//!   element spoon roles: core@0 disjoint@1
//!   element cup   roles: other@0 core@1
//!   preconditions: grasp_spoon
//!   actions: navigate stir
//!   postconditions: object_state_flag cup stirred
//!   permanence: static
//! end
//! ```
//!
//! Multiple postconditions are separated by `,`. `permanence` is `static` or
//! `movable` with an optional per-frame noise scale in meters. Verbs are free
//! words (any script); they are NFC-normalized and lowercased on read, and a
//! `_` inside a verb stands for a space (`look_at` matches "look at").

use std::collections::{HashMap, HashSet};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use super::model::*;
use crate::dsl::{self, Line, SyntaxError, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("frame '{frame}' lists unknown precondition '{missing}'")]
    DanglingPrecondition { frame: String, missing: String },
    #[error("precondition cycle: {}", .0.join(" -> "))]
    PreconditionCycle(Vec<String>),
}

impl LibraryError {
    pub fn kind(&self) -> &'static str {
        match self {
            LibraryError::Syntax(_) => "syntax",
            LibraryError::DanglingPrecondition { .. } => "dangling_precondition",
            LibraryError::PreconditionCycle(_) => "precondition_cycle",
        }
    }
}

pub fn normalize_word(word: &str) -> String {
    word.nfc().collect::<String>().to_lowercase()
}

pub fn parse_frame_library(source: &str) -> Result<FrameLibrary, LibraryError> {
    let lines = dsl::lex(source);
    let mut frames: Vec<SemanticFrame> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let head = line.head();
        if head.text != "frame" {
            return Err(SyntaxError::at(head, format!("expected 'frame', found '{}'", head.text)).into());
        }
        let id_tok = line
            .tokens
            .get(1)
            .ok_or_else(|| line.error_at_end("expected a frame id"))?;
        let id = dsl::identifier(id_tok)?;
        if let Some(extra) = line.tokens.get(2) {
            return Err(SyntaxError::at(extra, "unexpected token after frame id").into());
        }
        if let Some(prev) = seen.get(id) {
            return Err(
                SyntaxError::at(id_tok, format!("frame '{id}' already defined on line {prev}")).into(),
            );
        }
        seen.insert(id.to_string(), line.number);

        let end = lines[i + 1..]
            .iter()
            .position(|l| l.head().text == "end" || l.head().text == "frame")
            .map(|p| p + i + 1);
        let end = match end {
            Some(e) if lines[e].head().text == "end" => e,
            Some(e) => {
                return Err(SyntaxError::at(lines[e].head(), "expected 'end' before next frame").into())
            }
            None => {
                let last = lines.last().unwrap();
                return Err(last.error_at_end(format!("frame '{id}' is missing 'end'")).into());
            }
        };
        if let Some(extra) = lines[end].tokens.get(1) {
            return Err(SyntaxError::at(extra, "unexpected token after 'end'").into());
        }
        frames.push(parse_frame(id, &lines[i + 1..end], &lines[end])?);
        i = end + 1;
    }
    validate(frames)
}

fn parse_frame(id: &str, body: &[Line<'_>], end: &Line<'_>) -> Result<SemanticFrame, SyntaxError> {
    let mut verbs: Option<Vec<String>> = None;
    let mut elements: Vec<FrameElement> = Vec::new();
    let mut preconditions: Option<Vec<String>> = None;
    let mut actions: Option<Vec<String>> = None;
    let mut postconditions: Option<Vec<StateEffect>> = None;
    let mut permanence: Option<Permanence> = None;

    for line in body {
        let key = line.head();
        let duplicate = |present: bool| -> Result<(), SyntaxError> {
            if present {
                Err(SyntaxError::at(key, format!("duplicate key '{}'", key.text)))
            } else {
                Ok(())
            }
        };
        match key.text {
            "verbs" => {
                duplicate(verbs.is_some())?;
                let rest = line.after_colon(1)?;
                let mut out = Vec::new();
                for tok in rest {
                    if tok.text == "," {
                        continue;
                    }
                    let v = normalize_word(tok.text);
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
                verbs = Some(out);
            }
            "element" => elements.push(parse_element(line)?),
            "preconditions" => {
                duplicate(preconditions.is_some())?;
                preconditions = Some(identifier_list(line.after_colon(1)?)?);
            }
            "actions" => {
                duplicate(actions.is_some())?;
                actions = Some(identifier_list(line.after_colon(1)?)?);
            }
            "postconditions" => {
                duplicate(postconditions.is_some())?;
                postconditions = Some(parse_effects(line, line.after_colon(1)?)?);
            }
            "permanence" => {
                duplicate(permanence.is_some())?;
                permanence = Some(parse_permanence(line, line.after_colon(1)?)?);
            }
            other => return Err(SyntaxError::at(key, format!("unknown key '{other}'"))),
        }
    }

    let verbs = verbs.unwrap_or_default();
    if verbs.is_empty() {
        return Err(SyntaxError::at(
            end.head(),
            format!("frame '{id}' needs at least one verb"),
        ));
    }
    let actions = actions.unwrap_or_default();
    if actions.is_empty() {
        return Err(SyntaxError::at(
            end.head(),
            format!("frame '{id}' needs at least one action"),
        ));
    }
    let preconditions = preconditions.unwrap_or_default();
    let mut unique = HashSet::new();
    if let Some(dup) = preconditions.iter().find(|p| !unique.insert(p.as_str())) {
        return Err(SyntaxError::at(
            end.head(),
            format!("frame '{id}' repeats precondition '{dup}'"),
        ));
    }
    if !elements.iter().any(|e| e.roles.role_at(0) == Role::Core) {
        return Err(SyntaxError::at(
            end.head(),
            format!("frame '{id}' needs an element with role core at stage 0"),
        ));
    }
    if let Some(e) = elements
        .iter()
        .find(|e| e.roles.last_stage() > preconditions.len())
    {
        return Err(SyntaxError::at(
            end.head(),
            format!(
                "element '{}' of frame '{id}' names stage {} but the frame has only {} preconditions",
                e.object_class,
                e.roles.last_stage(),
                preconditions.len()
            ),
        ));
    }

    Ok(SemanticFrame {
        id: id.to_string(),
        verbs,
        elements,
        preconditions,
        actions,
        postconditions: postconditions.unwrap_or_default(),
        permanence: permanence.unwrap_or(Permanence::Static),
    })
}

fn identifier_list(tokens: &[Token<'_>]) -> Result<Vec<String>, SyntaxError> {
    tokens
        .iter()
        .filter(|t| t.text != ",")
        .map(|t| dsl::identifier(t).map(str::to_string))
        .collect()
}

fn parse_element(line: &Line<'_>) -> Result<FrameElement, SyntaxError> {
    let class_tok = line
        .tokens
        .get(1)
        .ok_or_else(|| line.error_at_end("expected an object class"))?;
    let class = dsl::identifier(class_tok)?;
    match line.tokens.get(2) {
        Some(t) if t.text == "roles" => {}
        Some(t) => {
            return Err(SyntaxError::at(
                t,
                format!("expected 'roles', found '{}'", t.text),
            ))
        }
        None => return Err(line.error_at_end("expected 'roles'")),
    }
    let rest = line.after_colon(3)?;
    if rest.is_empty() {
        return Err(line.error_at_end("expected at least one role"));
    }
    let mut breakpoints = Vec::new();
    for tok in rest.iter().filter(|t| t.text != ",") {
        let (name, stage) = tok
            .text
            .split_once('@')
            .ok_or_else(|| SyntaxError::at(tok, "expected role@stage"))?;
        let role =
            Role::from_keyword(name).ok_or_else(|| SyntaxError::at(tok, format!("unknown role '{name}'")))?;
        let stage: usize = stage
            .parse()
            .map_err(|_| SyntaxError::at(tok, format!("invalid stage '{stage}'")))?;
        breakpoints.push((stage, role));
    }
    let roles = RoleSchedule::new(breakpoints).map_err(|m| SyntaxError::at(&rest[0], m))?;
    Ok(FrameElement::new(class, roles))
}

fn parse_effects(line: &Line<'_>, tokens: &[Token<'_>]) -> Result<Vec<StateEffect>, SyntaxError> {
    let mut effects = Vec::new();
    for group in tokens.split(|t| t.text == ",") {
        let Some(kind) = group.first() else {
            return Err(line.error_at_end("empty postcondition"));
        };
        let args = &group[1..];
        let arity = |n: usize| -> Result<Vec<String>, SyntaxError> {
            if args.len() != n {
                return Err(SyntaxError::at(
                    kind,
                    format!("'{}' takes {n} argument(s), found {}", kind.text, args.len()),
                ));
            }
            args.iter()
                .map(|t| dsl::identifier(t).map(str::to_string))
                .collect()
        };
        let effect = match kind.text {
            "gripper_set" => {
                let a = arity(1)?;
                StateEffect::GripperSet { object: a[0].clone() }
            }
            "gripper_clear" => {
                arity(0)?;
                StateEffect::GripperClear
            }
            "object_moved_to" => {
                let a = arity(2)?;
                StateEffect::ObjectMovedTo {
                    object: a[0].clone(),
                    destination: a[1].clone(),
                }
            }
            "object_state_flag" => {
                let a = arity(2)?;
                StateEffect::ObjectStateFlag {
                    object: a[0].clone(),
                    flag: a[1].clone(),
                }
            }
            other => return Err(SyntaxError::at(kind, format!("unknown effect '{other}'"))),
        };
        effects.push(effect);
    }
    Ok(effects)
}

fn parse_permanence(line: &Line<'_>, tokens: &[Token<'_>]) -> Result<Permanence, SyntaxError> {
    match tokens {
        [t] if t.text == "static" => Ok(Permanence::Static),
        [t] if t.text == "movable" => Ok(Permanence::Movable { sigma: None }),
        [t, s] if t.text == "movable" => {
            let sigma = dsl::finite(s)?;
            if sigma <= 0.0 {
                return Err(SyntaxError::at(s, "movable sigma must be positive"));
            }
            Ok(Permanence::Movable { sigma: Some(sigma) })
        }
        [] => Err(line.error_at_end("expected 'static' or 'movable'")),
        [t, ..] => Err(SyntaxError::at(t, "expected 'static' or 'movable [sigma]'")),
    }
}

/// Checks cross-frame invariants: every precondition resolves and the
/// precondition graph is acyclic.
pub fn validate(frames: Vec<SemanticFrame>) -> Result<FrameLibrary, LibraryError> {
    let ids: HashMap<&str, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.id.as_str(), i))
        .collect();
    for f in &frames {
        if let Some(missing) = f.preconditions.iter().find(|p| !ids.contains_key(p.as_str())) {
            return Err(LibraryError::DanglingPrecondition {
                frame: f.id.clone(),
                missing: missing.clone(),
            });
        }
    }
    if let Some(cycle) = find_cycle(&frames, &ids) {
        return Err(LibraryError::PreconditionCycle(cycle));
    }
    Ok(FrameLibrary::from_validated(frames))
}

fn find_cycle(frames: &[SemanticFrame], ids: &HashMap<&str, usize>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; frames.len()];
    for root in 0..frames.len() {
        if marks[root] != Mark::New {
            continue;
        }
        // Explicit stack of (frame, next precondition index).
        let mut path: Vec<(usize, usize)> = vec![(root, 0)];
        marks[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = path.last_mut() {
            if let Some(pre) = frames[node].preconditions.get(*next) {
                *next += 1;
                let child = ids[pre.as_str()];
                match marks[child] {
                    Mark::New => {
                        marks[child] = Mark::Active;
                        path.push((child, 0));
                    }
                    Mark::Active => {
                        let start = path.iter().position(|(n, _)| *n == child).unwrap();
                        return Some(path[start..].iter().map(|(n, _)| frames[*n].id.clone()).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node] = Mark::Done;
                path.pop();
            }
        }
    }
    None
}

/// Canonical text form. Reading it back yields a structurally equal library.
pub fn serialize_frame_library(library: &FrameLibrary) -> String {
    let mut out = String::new();
    for (i, f) in library.frames().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("frame {}\n", f.id));
        out.push_str(&format!("  verbs: {}\n", f.verbs.join(" ")));
        for e in &f.elements {
            let roles: Vec<String> = e
                .roles
                .breakpoints()
                .iter()
                .map(|(s, r)| format!("{}@{}", r.keyword(), s))
                .collect();
            out.push_str(&format!(
                "  element {} roles: {}\n",
                e.object_class,
                roles.join(" ")
            ));
        }
        if !f.preconditions.is_empty() {
            out.push_str(&format!("  preconditions: {}\n", f.preconditions.join(" ")));
        }
        out.push_str(&format!("  actions: {}\n", f.actions.join(" ")));
        if !f.postconditions.is_empty() {
            let effects: Vec<String> = f.postconditions.iter().map(|e| e.to_string()).collect();
            out.push_str(&format!("  postconditions: {}\n", effects.join(", ")));
        }
        match f.permanence {
            Permanence::Static => out.push_str("  permanence: static\n"),
            Permanence::Movable { sigma: None } => out.push_str("  permanence: movable\n"),
            Permanence::Movable { sigma: Some(s) } => {
                out.push_str(&format!("  permanence: movable {}\n", dsl::format_number(s)))
            }
        }
        out.push_str("end\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const STIR: &str = "
frame grasp_spoon
  verbs: grasp, pick_up
  element spoon roles: core@0
  actions: navigate pick
  postconditions: gripper_set spoon
end

frame grasp_cup
  verbs: grasp
  element cup roles: core@0
  actions: navigate pick
  postconditions: gripper_set cup
end

frame stir_cup   # stirring needs a spoon in hand
  verbs: stir
  element spoon roles: core@0 disjoint@1
  element cup   roles: other@0 core@1
  preconditions: grasp_spoon
  actions: navigate stir
  postconditions: object_state_flag cup stirred
  permanence: static
end
";

    #[test]
    fn parses_stir_library() {
        let lib = parse_frame_library(STIR).unwrap();
        assert_eq!(lib.len(), 3);
        let stir = lib.get("stir_cup").unwrap();
        assert_eq!(stir.preconditions, ["grasp_spoon"]);
        let spoon = stir.element("spoon").unwrap();
        assert_eq!(spoon.roles.role_at(0), Role::Core);
        assert_eq!(spoon.roles.role_at(1), Role::Disjoint);
        let cup = stir.element("cup").unwrap();
        assert_eq!(cup.roles.role_at(0), Role::Other);
        assert_eq!(cup.roles.role_at(1), Role::Core);
        assert_eq!(lib.get("grasp_spoon").unwrap().verbs, ["grasp", "pick_up"]);
    }

    #[test]
    fn empty_text_is_empty_library() {
        assert!(parse_frame_library("").unwrap().is_empty());
        assert!(parse_frame_library("  # nothing here\n\n").unwrap().is_empty());
        assert_eq!(serialize_frame_library(&FrameLibrary::default()), "");
    }

    #[test]
    fn two_cycle_is_reported() {
        let src = "
frame a
  verbs: do
  element x roles: core@0
  preconditions: b
  actions: act
end
frame b
  verbs: do
  element x roles: core@0
  preconditions: a
  actions: act
end";
        assert_eq!(
            parse_frame_library(src),
            Err(LibraryError::PreconditionCycle(vec!["a".into(), "b".into()]))
        );
    }

    #[test]
    fn self_cycle_is_reported() {
        let src = "frame a\n verbs: do\n element x roles: core@0\n preconditions: a\n actions: act\nend";
        assert_eq!(
            parse_frame_library(src),
            Err(LibraryError::PreconditionCycle(vec!["a".into()]))
        );
    }

    #[test]
    fn dangling_precondition_names_missing_id() {
        let src = "frame a\n verbs: do\n element x roles: core@0\n preconditions: ghost\n actions: act\nend";
        assert_eq!(
            parse_frame_library(src),
            Err(LibraryError::DanglingPrecondition {
                frame: "a".into(),
                missing: "ghost".into()
            })
        );
    }

    fn syntax(src: &str) -> SyntaxError {
        match parse_frame_library(src) {
            Err(LibraryError::Syntax(e)) => e,
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected_with_position() {
        let e = syntax("frame a\n  verbs: do\n  colour: red\nend");
        assert_eq!((e.line, e.column), (3, 3));
        assert!(e.message.contains("unknown key"));
    }

    #[test]
    fn structural_errors() {
        assert!(
            syntax("frame a\n verbs: do\n element x roles: core@0\n actions: act\n")
                .message
                .contains("missing 'end'")
        );
        assert!(syntax("frame A\nend").message.contains("identifier"));
        assert!(syntax("frame a\n element x roles: core@0\n actions: act\nend")
            .message
            .contains("verb"));
        assert!(syntax("frame a\n verbs: do\n element x roles: core@0\nend")
            .message
            .contains("action"));
        assert!(
            syntax("frame a\n verbs: do\n element x roles: other@0\n actions: act\nend")
                .message
                .contains("core")
        );
        assert!(
            syntax("frame a\n verbs: do\n element x roles: core@0 other@1\n actions: act\nend")
                .message
                .contains("stage 1")
        );
        assert!(syntax(
            "frame a\n verbs: do\n element x roles: core@0\n actions: act\n postconditions: gripper_set\nend"
        )
        .message
        .contains("argument"));
        assert!(
            syntax("frame a\n verbs: do\n element x roles: boss@0\n actions: act\nend")
                .message
                .contains("unknown role")
        );
        assert!(syntax("frame a\n verbs: do\n element x roles: core@0\n actions: act\nend\nframe a\n verbs: do\n element x roles: core@0\n actions: act\nend").message.contains("already defined"));
    }

    #[test]
    fn serialize_round_trips() {
        let lib = parse_frame_library(STIR).unwrap();
        let text = serialize_frame_library(&lib);
        let again = parse_frame_library(&text).unwrap();
        assert_eq!(lib, again);
        assert_eq!(serialize_frame_library(&again), text);
    }

    #[test]
    fn unicode_verbs_normalize_once() {
        // "café" spelled with a combining acute accent.
        let decomposed =
            "frame brew\n verbs: Cafe\u{301}\n element coffee roles: core@0\n actions: brew\nend\n";
        let lib = parse_frame_library(decomposed).unwrap();
        assert_eq!(lib.get("brew").unwrap().verbs, ["café"]);
        let text = serialize_frame_library(&lib);
        let text2 = serialize_frame_library(&parse_frame_library(&text).unwrap());
        assert_eq!(text.as_bytes(), text2.as_bytes());
    }

    #[test]
    fn movable_permanence_with_sigma() {
        let src = "frame grasp_cup\n verbs: grasp\n element cup roles: core@0\n actions: pick\n permanence: movable 0.05\nend";
        let lib = parse_frame_library(src).unwrap();
        assert_eq!(
            lib.get("grasp_cup").unwrap().permanence,
            Permanence::Movable { sigma: Some(0.05) }
        );
        assert_eq!(parse_frame_library(&serialize_frame_library(&lib)).unwrap(), lib);
    }
}
