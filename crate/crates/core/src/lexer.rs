//! Lossless tokenizers for the Python-like and R-like snippet subsets.
//!
//! These lexers exist to validate highlight spans and to drive rendering, so
//! they never drop input: every character of the source ends up in exactly one
//! token, whitespace and comments included. Characters outside the recognized
//! surface syntax become single-character [`TokenKind::Operator`] tokens.
//!
//! The languages differ in one place that matters for the lessons: in R the
//! dot is an ordinary identifier character (`read.csv` is one name), while in
//! Python it separates an object from its attribute (`df.Score` is three
//! tokens).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::source::{Language, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal starting at offset {offset}")]
    UnterminatedString { offset: usize },
    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Operator,
    Delimiter,
    NumberLiteral,
    StringLiteral,
    Keyword,
    Whitespace,
    Comment,
}

impl TokenKind {
    /// Whitespace and comments carry no meaning for the linter.
    pub fn is_trivia(self) -> bool {
        matches!(self, TokenKind::Whitespace | TokenKind::Comment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.kind == kind && self.lexeme == lexeme
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenList {
    pub language: Language,
    pub tokens: Vec<Token>,
}

impl TokenList {
    /// Concatenation of every lexeme; equals the tokenized source.
    pub fn reconstruct(&self) -> String {
        self.tokens.iter().map(|t| t.lexeme.as_str()).collect()
    }

    /// Tokens that are neither whitespace nor comments.
    pub fn significant(&self) -> Vec<&Token> {
        self.tokens.iter().filter(|t| !t.kind.is_trivia()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const R_KEYWORDS: &[&str] = &["TRUE", "FALSE", "NA"];
const PYTHON_KEYWORDS: &[&str] = &["True", "False", "None"];

const R_OPERATORS: &[&str] = &[
    "<<-", "->>", "<-", "->", "==", "!=", "<=", ">=", "&&", "||", "::", "+", "-", "*", "/", "^",
    "<", ">", "!", "&", "|", "~", "=", "?", ":", "$", "@",
];
const R_DELIMITERS: &[&str] = &["(", ")", "{", "}", ",", ";"];

const PYTHON_OPERATORS: &[&str] = &[
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", ":=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "!",
];
const PYTHON_DELIMITERS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "+=", "-=", "*=", "/=", "%=", "@=", "&=", "|=", "^=", "->", "(",
    ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

/// Splits `source` into a lossless token stream for `language`.
pub fn tokenize(language: Language, source: &str) -> Result<TokenList, LexError> {
    let mut scanner = Scanner {
        chars: source.chars().collect(),
        pos: 0,
        language,
        tokens: Vec::new(),
        brackets: Vec::new(),
    };
    scanner.run()?;
    Ok(TokenList {
        language,
        tokens: scanner.tokens,
    })
}

/// Like [`tokenize`], but takes the language as a tag string.
pub fn tokenize_tagged(tag: &str, source: &str) -> Result<TokenList, LexError> {
    tokenize(tag.parse()?, source)
}

/// For each span, whether it starts at some token start and ends at some
/// token end. The two tokens may differ, so multi-token highlights pass.
pub fn spans_on_token_boundaries(tokens: &TokenList, spans: &[Span]) -> Vec<bool> {
    let starts: Vec<usize> = tokens.tokens.iter().map(|t| t.span.start).collect();
    let ends: Vec<usize> = tokens.tokens.iter().map(|t| t.span.end).collect();
    spans
        .iter()
        .map(|s| starts.binary_search(&s.start).is_ok() && ends.binary_search(&s.end).is_ok())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bracket {
    Single,
    Double,
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
    language: Language,
    tokens: Vec<Token>,
    // R only: open `[` / `[[` so that `]]` is emitted as one token only when
    // it closes a `[[`.
    brackets: Vec<Bracket>,
}

impl Scanner {
    fn run(&mut self) -> Result<(), LexError> {
        while let Some(c) = self.peek(0) {
            let start = self.pos;
            let kind = if c.is_whitespace() {
                self.eat_while(char::is_whitespace);
                TokenKind::Whitespace
            } else if c == '#' {
                self.eat_while(|ch| ch != '\n');
                TokenKind::Comment
            } else if c == '\'' || c == '"' {
                self.string(c)?;
                TokenKind::StringLiteral
            } else if c.is_ascii_digit() || (c == '.' && self.peek_is(1, |d| d.is_ascii_digit())) {
                self.number();
                TokenKind::NumberLiteral
            } else if self.is_ident_start(c) {
                self.pos += 1;
                let lang = self.language;
                self.eat_while(|ch| is_ident_continue(lang, ch));
                let text: String = self.chars[start..self.pos].iter().collect();
                let keywords = match self.language {
                    Language::R => R_KEYWORDS,
                    Language::Python => PYTHON_KEYWORDS,
                };
                if keywords.contains(&text.as_str()) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                }
            } else {
                self.punctuation()
            };
            self.push(kind, start);
        }
        Ok(())
    }

    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn peek_is(&self, ahead: usize, pred: impl Fn(char) -> bool) -> bool {
        self.peek(ahead).is_some_and(pred)
    }

    fn eat_while(&mut self, pred: impl Fn(char) -> bool) {
        while self.peek_is(0, &pred) {
            self.pos += 1;
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize) {
        let lexeme: String = self.chars[start..self.pos].iter().collect();
        self.tokens.push(Token {
            kind,
            lexeme,
            span: Span::new(start, self.pos),
        });
    }

    fn is_ident_start(&self, c: char) -> bool {
        match self.language {
            Language::R => c.is_alphabetic() || c == '_' || c == '.',
            Language::Python => c.is_alphabetic() || c == '_',
        }
    }

    fn string(&mut self, quote: char) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.peek(0) {
                None | Some('\n') => return Err(LexError::UnterminatedString { offset: start }),
                Some('\\') if self.peek_is(1, |d| d == '\'' || d == '"') => self.pos += 2,
                Some(c) => {
                    self.pos += 1;
                    if c == quote {
                        return Ok(());
                    }
                }
            }
        }
    }

    fn number(&mut self) {
        self.eat_while(|c| c.is_ascii_digit());
        if self.peek(0) == Some('.') {
            self.pos += 1;
            self.eat_while(|c| c.is_ascii_digit());
        }
        if self.peek_is(0, |c| c == 'e' || c == 'E') {
            let sign = usize::from(self.peek_is(1, |c| c == '+' || c == '-'));
            if self.peek_is(1 + sign, |c| c.is_ascii_digit()) {
                self.pos += 1 + sign;
                self.eat_while(|c| c.is_ascii_digit());
            }
        }
        let suffix = match self.language {
            Language::R => ['L', 'i'],
            Language::Python => ['j', 'J'],
        };
        if self.peek_is(0, |c| suffix.contains(&c))
            && !self.peek_is(1, |c| is_ident_continue(self.language, c))
        {
            self.pos += 1;
        }
    }

    fn punctuation(&mut self) -> TokenKind {
        match self.language {
            Language::R => self.r_punctuation(),
            Language::Python => self.python_punctuation(),
        }
    }

    fn r_punctuation(&mut self) -> TokenKind {
        let c = self.chars[self.pos];
        match c {
            '[' => {
                if self.peek(1) == Some('[') {
                    self.pos += 2;
                    self.brackets.push(Bracket::Double);
                } else {
                    self.pos += 1;
                    self.brackets.push(Bracket::Single);
                }
                return TokenKind::Delimiter;
            }
            ']' => {
                if self.brackets.last() == Some(&Bracket::Double) && self.peek(1) == Some(']') {
                    self.pos += 2;
                } else {
                    self.pos += 1;
                }
                self.brackets.pop();
                return TokenKind::Delimiter;
            }
            '%' => {
                // `%in%`, `%%`, `%/%`: up to the next `%` on the same line.
                let close = self.chars[self.pos + 1..]
                    .iter()
                    .take_while(|&&ch| ch != '\n')
                    .position(|&ch| ch == '%');
                self.pos += close.map_or(1, |i| i + 2);
                return TokenKind::Operator;
            }
            _ => {}
        }
        if let Some(len) = self.longest_match(R_OPERATORS) {
            self.pos += len;
            TokenKind::Operator
        } else if let Some(len) = self.longest_match(R_DELIMITERS) {
            self.pos += len;
            TokenKind::Delimiter
        } else {
            self.pos += 1;
            TokenKind::Operator
        }
    }

    fn python_punctuation(&mut self) -> TokenKind {
        let op = self.longest_match(PYTHON_OPERATORS).unwrap_or(0);
        let delim = self.longest_match(PYTHON_DELIMITERS).unwrap_or(0);
        if delim >= op && delim > 0 {
            self.pos += delim;
            TokenKind::Delimiter
        } else if op > 0 {
            self.pos += op;
            TokenKind::Operator
        } else {
            self.pos += 1;
            TokenKind::Operator
        }
    }

    fn longest_match(&self, table: &[&str]) -> Option<usize> {
        table
            .iter()
            .filter(|candidate| {
                candidate
                    .chars()
                    .enumerate()
                    .all(|(i, ch)| self.peek(i) == Some(ch))
            })
            .map(|candidate| candidate.chars().count())
            .max()
    }
}

fn is_ident_continue(language: Language, c: char) -> bool {
    match language {
        Language::R => c.is_alphanumeric() || c == '_' || c == '.',
        Language::Python => c.is_alphanumeric() || c == '_',
    }
}
