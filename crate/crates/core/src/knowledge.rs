//! The transfer knowledge base and the negative-transfer linter.
//!
//! Each [`TransferRule`] maps a construct of the known language onto the
//! target language and classifies the mapping. Gotcha rules may name a
//! token-level detector; [`lint_target`] runs those detectors over
//! target-language code. Detection works on the token stream only: no parse
//! tree, no dataflow. An index that merely evaluates to zero, for instance,
//! is not caught.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{self, LoadError};
use crate::lesson::{AnnotationKind, LessonPack, ValidationReport};
use crate::lexer::{tokenize, LexError, Token, TokenKind};
use crate::source::{Language, Span};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("invalid rule set: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown construct `{0}`")]
    UnknownConstruct(String),
}

/// One side of a mapping: a readable name plus an optional code pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Construct {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

impl Construct {
    fn display(&self) -> &str {
        self.pattern.as_deref().unwrap_or(&self.name)
    }
}

/// Built-in token patterns a gotcha rule can attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    /// Literal `0` as a whole element of `[...]` or `[[...]]`.
    ZeroIndex,
    /// A range starting at literal `0` inside brackets, e.g. `x[0:5]`.
    ZeroBasedRange,
    /// `== NA` or `!= NA` in either operand order.
    NaComparison,
    /// `frame.column` where `frame` is a declared data-frame name.
    FrameDotAccess,
    /// `[[c(...)]]`: the Python list-of-columns habit.
    DoubleBracketVector,
    /// `frame[condition]` with a comparison but no comma.
    FrameFilterWithoutComma,
    /// `True`, `False` or `None` used as names.
    PythonLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRule {
    pub id: String,
    pub kind: AnnotationKind,
    pub known: Construct,
    pub target: Construct,
    /// Template; `{known}`, `{target}`, `{known_language}` and
    /// `{target_language}` are substituted when rendered.
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<Detector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    pub format_version: u32,
    pub known_language: Language,
    pub target_language: Language,
    pub rules: Vec<TransferRule>,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let set: RuleSet = document::parse(text)?;
        if set.format_version != FORMAT_VERSION {
            let (line, column) = document::locate(text, "\"format_version\"");
            return Err(LoadError::malformed(
                line,
                column,
                format!("unsupported format_version {}", set.format_version),
            )
            .into());
        }
        let problems = set.problems();
        if problems.is_empty() {
            Ok(set)
        } else {
            Err(RuleError::Invalid(problems))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        Self::parse(&document::read_file(path.as_ref())?)
    }

    /// Violated rule-set invariants, in rule order.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut ids = HashSet::new();
        for rule in &self.rules {
            if !ids.insert(rule.id.as_str()) {
                problems.push(format!("duplicate rule id `{}`", rule.id));
            }
            if rule.kind == AnnotationKind::NewFact && rule.known.pattern.is_some() {
                problems.push(format!(
                    "new-fact rule `{}` must not have a known pattern",
                    rule.id
                ));
            }
            if rule.explanation.trim().is_empty() {
                problems.push(format!("rule `{}` has no explanation", rule.id));
            }
            let sides = [
                (&rule.known, self.known_language),
                (&rule.target, self.target_language),
            ];
            for (construct, language) in sides {
                if let Some(pattern) = &construct.pattern {
                    if let Err(e) = tokenize(language, pattern) {
                        problems.push(format!("rule `{}` pattern {pattern:?}: {e}", rule.id));
                    }
                }
            }
        }
        problems
    }

    pub fn get(&self, id: &str) -> Option<&TransferRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule serialization is infallible")
    }

    /// Renders a rule's explanation template for this language pair.
    pub fn explain(&self, rule: &TransferRule) -> String {
        rule.explanation
            .replace("{known_language}", self.known_language.display_name())
            .replace("{target_language}", self.target_language.display_name())
            .replace("{known}", rule.known.display())
            .replace("{target}", rule.target.display())
    }
}

pub fn lookup<'a>(rules: &'a RuleSet, construct_id: &str) -> Result<&'a TransferRule, RuleError> {
    rules
        .get(construct_id)
        .ok_or_else(|| RuleError::UnknownConstruct(construct_id.to_string()))
}

/// Cross-checks a pack against the knowledge base: every annotation must
/// cite an existing rule of the same kind.
pub fn check_curriculum(pack: &LessonPack, rules: &RuleSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    for lesson in &pack.lessons {
        for step in &lesson.steps {
            for annotation in &step.annotations {
                match rules.get(&annotation.rule) {
                    None => report.push(
                        "unknown-rule",
                        Some(&lesson.id),
                        Some(step.index),
                        format!("annotation cites unknown rule `{}`", annotation.rule),
                    ),
                    Some(rule) if rule.kind != annotation.kind => report.push(
                        "kind-mismatch",
                        Some(&lesson.id),
                        Some(step.index),
                        format!(
                            "annotation is `{}` but rule `{}` is `{}`",
                            annotation.kind, rule.id, rule.kind
                        ),
                    ),
                    Some(_) => {}
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Gotcha,
    Note,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Gotcha => "gotcha",
            Severity::Note => "note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub span: Span,
    pub message: String,
    pub severity: Severity,
}

impl Finding {
    /// `file:offset: [severity rule-id] message`
    pub fn diagnostic(&self, file: &str) -> String {
        format!(
            "{file}:{}: [{} {}] {}",
            self.span.start, self.severity, self.rule_id, self.message
        )
    }
}

/// Names the linter may treat as data frames.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LintContext {
    pub frames: BTreeSet<String>,
}

impl LintContext {
    pub fn with_frames<I, S>(frames: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LintContext {
            frames: frames.into_iter().map(Into::into).collect(),
        }
    }
}

/// Runs every detector-backed rule over target-language `source`. Findings
/// are ordered by span start, then by rule order in the set.
pub fn lint_target(
    rules: &RuleSet,
    source: &str,
    context: &LintContext,
) -> Result<Vec<Finding>, LexError> {
    let tokens = tokenize(rules.target_language, source)?;
    let view = TokenView::new(&tokens.tokens);
    let mut findings = Vec::new();
    for (order, rule) in rules.rules.iter().enumerate() {
        let Some(detector) = rule.detector else {
            continue;
        };
        let severity = if rule.kind == AnnotationKind::NegativeTransfer {
            Severity::Gotcha
        } else {
            Severity::Note
        };
        for span in view.detect(detector, context) {
            findings.push((
                order,
                Finding {
                    rule_id: rule.id.clone(),
                    span,
                    message: rules.explain(rule),
                    severity,
                },
            ));
        }
    }
    findings.sort_by_key(|(order, f)| (f.span.start, *order, f.span.end));
    Ok(findings.into_iter().map(|(_, f)| f).collect())
}

/// Significant tokens with bracket structure precomputed.
struct TokenView<'a> {
    tokens: Vec<&'a Token>,
    /// Innermost open bracket enclosing each token.
    enclosing: Vec<Option<usize>>,
    /// Matching closer of each opener.
    closer: Vec<Option<usize>>,
}

const OPENERS: &[&str] = &["(", "[", "[[", "{"];
const CLOSERS: &[&str] = &[")", "]", "]]", "}"];
const COMPARISONS: &[&str] = &["==", "!=", "<", ">", "<=", ">=", "%in%"];

impl<'a> TokenView<'a> {
    fn new(all: &'a [Token]) -> Self {
        let tokens: Vec<&Token> = all.iter().filter(|t| !t.kind.is_trivia()).collect();
        let mut enclosing = Vec::with_capacity(tokens.len());
        let mut closer = vec![None; tokens.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            let is_delim = t.kind == TokenKind::Delimiter;
            if is_delim && CLOSERS.contains(&t.lexeme.as_str()) {
                if let Some(open) = stack.pop() {
                    closer[open] = Some(i);
                }
            }
            enclosing.push(stack.last().copied());
            if is_delim && OPENERS.contains(&t.lexeme.as_str()) {
                stack.push(i);
            }
        }
        TokenView {
            tokens,
            enclosing,
            closer,
        }
    }

    fn lexeme(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(|t| t.lexeme.as_str())
    }

    fn prev(&self, i: usize) -> Option<&str> {
        i.checked_sub(1).and_then(|p| self.lexeme(p))
    }

    fn in_brackets(&self, i: usize) -> bool {
        self.enclosing[i].is_some_and(|o| matches!(self.lexeme(o), Some("[" | "[[")))
    }

    fn is_zero(&self, i: usize) -> bool {
        let t = self.tokens[i];
        t.kind == TokenKind::NumberLiteral
            && t.lexeme
                .trim_end_matches('L')
                .parse::<f64>()
                .is_ok_and(|v| v == 0.0)
    }

    fn starts_element(&self, i: usize) -> bool {
        matches!(self.prev(i), Some("[" | "[[" | ","))
    }

    fn span(&self, from: usize, to: usize) -> Span {
        Span::new(self.tokens[from].span.start, self.tokens[to].span.end)
    }

    fn is_frame(&self, i: usize, context: &LintContext) -> bool {
        let t = self.tokens[i];
        t.kind == TokenKind::Identifier && context.frames.contains(&t.lexeme)
    }

    fn detect(&self, detector: Detector, context: &LintContext) -> Vec<Span> {
        let n = self.tokens.len();
        let mut spans = Vec::new();
        for i in 0..n {
            let t = self.tokens[i];
            match detector {
                Detector::ZeroIndex => {
                    if self.is_zero(i)
                        && self.in_brackets(i)
                        && self.starts_element(i)
                        && matches!(self.lexeme(i + 1), Some("]" | "]]" | ","))
                    {
                        spans.push(t.span);
                    }
                }
                Detector::ZeroBasedRange => {
                    if self.is_zero(i)
                        && self.in_brackets(i)
                        && self.starts_element(i)
                        && self.lexeme(i + 1) == Some(":")
                    {
                        let end = if i + 2 < n { i + 2 } else { i + 1 };
                        spans.push(self.span(i, end));
                    }
                }
                Detector::NaComparison => {
                    if t.kind == TokenKind::Operator
                        && matches!(t.lexeme.as_str(), "==" | "!=")
                        && i > 0
                        && i + 1 < n
                    {
                        let na = |j: usize| self.tokens[j].is(TokenKind::Keyword, "NA");
                        if na(i - 1) || na(i + 1) {
                            spans.push(self.span(i - 1, i + 1));
                        }
                    }
                }
                Detector::FrameDotAccess => {
                    if t.kind == TokenKind::Identifier {
                        if let Some((prefix, rest)) = t.lexeme.split_once('.') {
                            if !rest.is_empty() && context.frames.contains(prefix) {
                                spans.push(t.span);
                            }
                        }
                    }
                }
                Detector::DoubleBracketVector => {
                    if t.is(TokenKind::Delimiter, "[[")
                        && self
                            .tokens
                            .get(i + 1)
                            .is_some_and(|c| c.is(TokenKind::Identifier, "c"))
                        && self.lexeme(i + 2) == Some("(")
                    {
                        let end = self.closer[i].unwrap_or(i + 2);
                        spans.push(self.span(i, end));
                    }
                }
                Detector::FrameFilterWithoutComma => {
                    if t.is(TokenKind::Delimiter, "[") && i > 0 && self.is_frame(i - 1, context) {
                        if let Some(close) = self.closer[i] {
                            let inside = i + 1..close;
                            let top_level = |j: &usize| self.enclosing[*j] == Some(i);
                            let has_comma = inside
                                .clone()
                                .filter(top_level)
                                .any(|j| self.tokens[j].is(TokenKind::Delimiter, ","));
                            let has_comparison = inside.filter(top_level).any(|j| {
                                self.tokens[j].kind == TokenKind::Operator
                                    && COMPARISONS.contains(&self.tokens[j].lexeme.as_str())
                            });
                            if has_comparison && !has_comma {
                                spans.push(self.span(i - 1, close));
                            }
                        }
                    }
                }
                Detector::PythonLiteral => {
                    if t.kind == TokenKind::Identifier
                        && matches!(t.lexeme.as_str(), "True" | "False" | "None")
                    {
                        spans.push(t.span);
                    }
                }
            }
        }
        spans
    }
}
