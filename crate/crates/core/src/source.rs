//! Language tags, character spans and source normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexer::LexError;

/// The two snippet languages the tutor knows how to lex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    R,
}

impl Language {
    pub fn tag(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::R => "r",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Language::Python => "Python",
            Language::R => "R",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Language {
    type Err = LexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "r" => Ok(Language::R),
            _ => Err(LexError::UnsupportedLanguage(s.to_string())),
        }
    }
}

/// Half-open range of character offsets (Unicode scalar values) into a
/// normalized source string. Serialized as a two-element `[start, end]` array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The covered substring of `source`, counting characters rather than bytes.
    /// Returns `None` when the span does not fit.
    pub fn slice<'a>(&self, source: &'a str) -> Option<&'a str> {
        if self.start > self.end {
            return None;
        }
        let begin = byte_offset(source, self.start)?;
        let end = byte_offset(source, self.end)?;
        Some(&source[begin..end])
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Byte index of the `chars`-th character, or the byte length when
/// `chars` equals the character count.
fn byte_offset(source: &str, chars: usize) -> Option<usize> {
    source
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(source.len()))
        .nth(chars)
}

/// Number of characters (Unicode scalar values) in `source`.
pub fn char_len(source: &str) -> usize {
    source.chars().count()
}

/// Joins lines with a single `\n` and drops trailing newlines.
pub fn normalize_source(source: &str) -> String {
    let joined = source.replace("\r\n", "\n").replace('\r', "\n");
    joined.trim_end_matches('\n').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_round_trips_as_array() {
        let span = Span::new(3, 5);
        let json = serde_json::to_string(&span).unwrap();
        assert_eq!(json, "[3,5]");
        assert_eq!(serde_json::from_str::<Span>(&json).unwrap(), span);
    }

    #[test]
    fn slice_counts_characters() {
        let src = "é <- 'ü'";
        assert_eq!(Span::new(0, 1).slice(src), Some("é"));
        assert_eq!(Span::new(5, 8).slice(src), Some("'ü'"));
        assert_eq!(Span::new(5, 9).slice(src), None);
    }

    #[test]
    fn overlap_is_strict_for_half_open_ranges() {
        assert!(!Span::new(0, 2).overlaps(&Span::new(2, 4)));
        assert!(Span::new(0, 3).overlaps(&Span::new(2, 4)));
    }

    #[test]
    fn normalization_strips_trailing_newlines_and_crlf() {
        assert_eq!(normalize_source("a\r\nb\n\n"), "a\nb");
        assert_eq!(normalize_source("x"), "x");
    }

    #[test]
    fn language_tags_parse() {
        assert_eq!("R".parse::<Language>().unwrap(), Language::R);
        assert_eq!("python".parse::<Language>().unwrap(), Language::Python);
        assert!(matches!(
            "julia".parse::<Language>(),
            Err(LexError::UnsupportedLanguage(_))
        ));
    }
}
