//! Line-oriented lexer shared by the frame-library and scenario formats.
//!
//! Both formats are sequences of lines. `#` starts a comment that runs to the
//! end of the line, runs of whitespace separate tokens, and `:` and `,` are
//! always tokens of their own so `verbs: stir` and `verbs:stir` lex
//! identically.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    pub fn at(token: &Token<'_>, message: impl Into<String>) -> Self {
        SyntaxError::new(token.line, token.column, message)
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    /// 1-based line number.
    pub line: usize,
    /// 1-based column, counted in characters.
    pub column: usize,
}

/// One non-empty source line after comment stripping.
#[derive(Debug, Clone)]
pub struct Line<'a> {
    pub number: usize,
    pub tokens: Vec<Token<'a>>,
}

impl<'a> Line<'a> {
    pub fn head(&self) -> &Token<'a> {
        &self.tokens[0]
    }

    /// Position just past the last token, for "expected more" errors.
    pub fn end_column(&self) -> usize {
        let last = self.tokens.last().expect("lines are never empty");
        last.column + last.text.chars().count()
    }

    pub fn error_at_end(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.number, self.end_column(), message)
    }

    /// Splits `key : rest...` and returns `rest`, requiring the colon.
    pub fn after_colon(&self, from: usize) -> Result<&[Token<'a>], SyntaxError> {
        match self.tokens.get(from) {
            Some(t) if t.text == ":" => Ok(&self.tokens[from + 1..]),
            Some(t) => Err(SyntaxError::at(t, format!("expected ':' but found '{}'", t.text))),
            None => Err(self.error_at_end("expected ':'")),
        }
    }
}

pub fn lex(source: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let number = idx + 1;
        let mut tokens = Vec::new();
        let mut start: Option<(usize, usize)> = None; // (byte offset, column)
        let mut column = 0;
        for (offset, ch) in raw.char_indices() {
            column += 1;
            if ch == '#' {
                if let Some((s, c)) = start.take() {
                    tokens.push(Token {
                        text: &raw[s..offset],
                        line: number,
                        column: c,
                    });
                }
                break;
            }
            if ch.is_whitespace() || ch == ':' || ch == ',' {
                if let Some((s, c)) = start.take() {
                    tokens.push(Token {
                        text: &raw[s..offset],
                        line: number,
                        column: c,
                    });
                }
                if ch == ':' || ch == ',' {
                    tokens.push(Token {
                        text: &raw[offset..offset + 1],
                        line: number,
                        column,
                    });
                }
                continue;
            }
            if start.is_none() {
                start = Some((offset, column));
            }
        }
        if let Some((s, c)) = start {
            tokens.push(Token {
                text: &raw[s..],
                line: number,
                column: c,
            });
        }
        if !tokens.is_empty() {
            lines.push(Line { number, tokens });
        }
    }
    lines
}

/// `[a-z_][a-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn identifier<'a>(token: &Token<'a>) -> Result<&'a str, SyntaxError> {
    if is_identifier(token.text) {
        Ok(token.text)
    } else {
        Err(SyntaxError::at(
            token,
            format!("'{}' is not a valid identifier", token.text),
        ))
    }
}

pub fn number<T: FromStr>(token: &Token<'_>) -> Result<T, SyntaxError> {
    token
        .text
        .parse()
        .map_err(|_| SyntaxError::at(token, format!("expected a number, found '{}'", token.text)))
}

pub fn finite(token: &Token<'_>) -> Result<f64, SyntaxError> {
    let v: f64 = number(token)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SyntaxError::at(token, "value must be finite"))
    }
}

/// Formats a float so that parsing it back yields the same bits.
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colon_is_its_own_token() {
        let lines = lex("  verbs:stir  mix # trailing\n\n# only comment\nend");
        assert_eq!(lines.len(), 2);
        let texts: Vec<_> = lines[0].tokens.iter().map(|t| t.text).collect();
        assert_eq!(texts, ["verbs", ":", "stir", "mix"]);
        assert_eq!(lines[0].tokens[0].column, 3);
        assert_eq!(lines[0].tokens[2].column, 9);
        assert_eq!(lines[1].number, 4);
    }

    #[test]
    fn columns_count_characters() {
        let lines = lex("verbs: café mix");
        assert_eq!(lines[0].tokens[2].text, "café");
        assert_eq!(lines[0].tokens[3].column, 13);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("stir_cup"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier("Stir"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5, 0.1, 1e-7, 123456.789] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_number(4.0), "4");
    }
}
