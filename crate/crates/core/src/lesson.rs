//! Lesson packs: paired snippets, highlight steps, tests and survey.
//!
//! A pack is loaded with [`load_pack`] (syntax only) and checked with
//! [`validate_pack`], which reports every structural problem it finds as data.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::document::{self, LoadError};
use crate::lexer::{spans_on_token_boundaries, tokenize};
use crate::source::{char_len, normalize_source, Language, Span};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LessonPack {
    pub format_version: u32,
    pub id: String,
    pub title: String,
    pub known_language: Language,
    pub target_language: Language,
    pub lessons: Vec<Lesson>,
    pub pretest: Vec<Question>,
    pub posttest: Vec<Question>,
    pub survey: Vec<SurveyStatement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lesson {
    pub id: String,
    pub title: String,
    pub known_snippet: Snippet,
    pub target_snippet: Snippet,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snippet {
    pub language: Language,
    #[serde(deserialize_with = "normalized")]
    pub source: String,
}

impl Snippet {
    pub fn new(language: Language, source: &str) -> Self {
        Snippet {
            language,
            source: normalize_source(source),
        }
    }
}

fn normalized<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    String::deserialize(de).map(|s| normalize_source(&s))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub index: usize,
    #[serde(default)]
    pub known_spans: Vec<Span>,
    #[serde(default)]
    pub target_spans: Vec<Span>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotationKind {
    #[serde(rename = "transfer")]
    PositiveTransfer,
    #[serde(rename = "gotcha")]
    NegativeTransfer,
    #[serde(rename = "newfact")]
    NewFact,
}

impl AnnotationKind {
    pub const ALL: [AnnotationKind; 3] = [
        AnnotationKind::PositiveTransfer,
        AnnotationKind::NegativeTransfer,
        AnnotationKind::NewFact,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            AnnotationKind::PositiveTransfer => "transfer",
            AnnotationKind::NegativeTransfer => "gotcha",
            AnnotationKind::NewFact => "newfact",
        }
    }

    // Gotchas win over new facts, which win over transfers, when several
    // annotations describe the same side of a step.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            AnnotationKind::NegativeTransfer => 2,
            AnnotationKind::NewFact => 1,
            AnnotationKind::PositiveTransfer => 0,
        }
    }
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Known,
    Target,
    Both,
}

impl Side {
    pub fn covers_known(self) -> bool {
        matches!(self, Side::Known | Side::Both)
    }

    pub fn covers_target(self) -> bool {
        matches!(self, Side::Target | Side::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub side: Side,
    /// Id of the transfer rule this explanation instantiates.
    pub rule: String,
    /// Markdown subset: emphasis and inline code.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBox {
    pub known_output: String,
    pub target_output: String,
    pub caption: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    SingleChoice,
    MultiAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    pub choices: Vec<String>,
    pub correct: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyStatement {
    pub id: String,
    pub text: String,
}

impl LessonPack {
    pub fn lesson(&self, id: &str) -> Option<&Lesson> {
        self.lessons.iter().find(|l| l.id == id)
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.pretest.iter().find(|q| q.id == id)
    }

    pub fn total_steps(&self) -> usize {
        self.lessons.iter().map(|l| l.steps.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pack serialization is infallible")
    }
}

/// Parses a pack document. Checks syntax, the format version and that the
/// lesson list is non-empty; everything else is left to [`validate_pack`].
pub fn parse_pack(text: &str) -> Result<LessonPack, LoadError> {
    let pack: LessonPack = document::parse(text)?;
    if pack.format_version != FORMAT_VERSION {
        let (line, column) = document::locate(text, "\"format_version\"");
        return Err(LoadError::malformed(
            line,
            column,
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                pack.format_version
            ),
        ));
    }
    if pack.lessons.is_empty() {
        let (line, column) = document::locate(text, "\"lessons\"");
        return Err(LoadError::malformed(
            line,
            column,
            "`lessons` must not be empty",
        ));
    }
    Ok(pack)
}

pub fn load_pack(path: impl AsRef<Path>) -> Result<LessonPack, LoadError> {
    parse_pack(&document::read_file(path.as_ref())?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lesson: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.lesson, self.step) {
            (Some(l), Some(s)) => write!(f, "{l}#{s}: ")?,
            (Some(l), None) => write!(f, "{l}: ")?,
            _ => {}
        }
        write!(f, "[{}] {}", self.rule, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule.as_str()).collect()
    }

    pub(crate) fn push(
        &mut self,
        rule: &str,
        lesson: Option<&str>,
        step: Option<usize>,
        detail: impl Into<String>,
    ) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            lesson: lesson.map(str::to_string),
            step,
            detail: detail.into(),
        });
    }
}

/// Checks every structural invariant of a pack. Violations are reported in
/// document order, so repeated runs give identical reports.
pub fn validate_pack(pack: &LessonPack) -> ValidationReport {
    let mut report = ValidationReport::default();

    if pack.known_language == pack.target_language {
        report.push(
            "language-pair",
            None,
            None,
            format!(
                "known and target language are both `{}`",
                pack.known_language
            ),
        );
    }
    if pack.lessons.is_empty() {
        report.push("no-lessons", None, None, "pack has no lessons");
    }

    let mut lesson_ids = HashSet::new();
    for lesson in &pack.lessons {
        if !lesson_ids.insert(lesson.id.as_str()) {
            report.push(
                "duplicate-lesson-id",
                Some(&lesson.id),
                None,
                format!("lesson id `{}` appears more than once", lesson.id),
            );
        }
        validate_lesson(pack, lesson, &mut report);
    }

    validate_questions(&pack.pretest, "pretest", &mut report);
    validate_questions(&pack.posttest, "posttest", &mut report);
    let pre: BTreeSet<&str> = pack.pretest.iter().map(|q| q.id.as_str()).collect();
    let post: BTreeSet<&str> = pack.posttest.iter().map(|q| q.id.as_str()).collect();
    if pre != post {
        let missing: Vec<_> = pre.difference(&post).copied().collect();
        let extra: Vec<_> = post.difference(&pre).copied().collect();
        report.push(
            "posttest-mismatch",
            None,
            None,
            format!("posttest must repeat the pretest; missing {missing:?}, extra {extra:?}"),
        );
    } else {
        for q in &pack.posttest {
            if pack.question(&q.id) != Some(q) {
                report.push(
                    "posttest-mismatch",
                    None,
                    None,
                    format!(
                        "posttest question `{}` differs from its pretest version",
                        q.id
                    ),
                );
            }
        }
    }

    if pack.survey.is_empty() {
        report.push("empty-survey", None, None, "pack has no survey statements");
    }
    let mut statement_ids = HashSet::new();
    for s in &pack.survey {
        if !statement_ids.insert(s.id.as_str()) {
            report.push(
                "duplicate-statement-id",
                None,
                None,
                format!("survey statement id `{}` appears more than once", s.id),
            );
        }
        if s.text.trim().is_empty() {
            report.push(
                "empty-statement",
                None,
                None,
                format!("survey statement `{}` has no text", s.id),
            );
        }
    }

    report
}

fn validate_lesson(pack: &LessonPack, lesson: &Lesson, report: &mut ValidationReport) {
    let lid = Some(lesson.id.as_str());
    let sides = [
        ("known", &lesson.known_snippet, pack.known_language),
        ("target", &lesson.target_snippet, pack.target_language),
    ];
    let mut token_lists = Vec::with_capacity(2);
    for (name, snippet, expected) in sides {
        if snippet.language != expected {
            report.push(
                "snippet-language",
                lid,
                None,
                format!(
                    "{name} snippet is `{}` but the pack's {name} language is `{expected}`",
                    snippet.language
                ),
            );
        }
        if snippet.source.is_empty() {
            report.push(
                "empty-source",
                lid,
                None,
                format!("{name} snippet is empty"),
            );
        }
        match tokenize(snippet.language, &snippet.source) {
            Ok(tokens) => token_lists.push(Some(tokens)),
            Err(e) => {
                report.push("lex-error", lid, None, format!("{name} snippet: {e}"));
                token_lists.push(None);
            }
        }
    }

    if lesson.steps.is_empty() {
        report.push("empty-steps", lid, None, "lesson has no steps");
    }
    for (position, step) in lesson.steps.iter().enumerate() {
        let sid = Some(step.index);
        if step.index != position {
            report.push(
                "step-index",
                lid,
                sid,
                format!("step at position {position} is numbered {}", step.index),
            );
        }
        if step.known_spans.is_empty() && step.target_spans.is_empty() {
            report.push("empty-step", lid, sid, "step highlights nothing");
        }
        if step.annotations.is_empty() {
            report.push("no-annotations", lid, sid, "step has no annotations");
        }
        for a in &step.annotations {
            if a.text.trim().is_empty() {
                report.push(
                    "empty-annotation",
                    lid,
                    sid,
                    format!("`{}` annotation has no text", a.rule),
                );
            }
        }
        let covers_known = step.annotations.iter().any(|a| a.side.covers_known());
        let covers_target = step.annotations.iter().any(|a| a.side.covers_target());
        if !step.known_spans.is_empty() && !covers_known {
            report.push(
                "unannotated-side",
                lid,
                sid,
                "known-side highlight has no known-side annotation",
            );
        }
        if !step.target_spans.is_empty() && !covers_target {
            report.push(
                "unannotated-side",
                lid,
                sid,
                "target-side highlight has no target-side annotation",
            );
        }

        let span_sides = [
            (
                "known",
                &step.known_spans,
                &lesson.known_snippet,
                &token_lists[0],
            ),
            (
                "target",
                &step.target_spans,
                &lesson.target_snippet,
                &token_lists[1],
            ),
        ];
        for (name, spans, snippet, tokens) in span_sides {
            validate_spans(name, spans, snippet, tokens.as_ref(), lid, sid, report);
        }
    }

    if let Some(output) = &lesson.output {
        if output.known_output.trim().is_empty() || output.target_output.trim().is_empty() {
            report.push(
                "output-empty",
                lid,
                None,
                "output box must show both outputs",
            );
        }
    }
}

fn validate_spans(
    side: &str,
    spans: &[Span],
    snippet: &Snippet,
    tokens: Option<&crate::lexer::TokenList>,
    lesson: Option<&str>,
    step: Option<usize>,
    report: &mut ValidationReport,
) {
    let len = char_len(&snippet.source);
    let mut in_bounds = Vec::new();
    for span in spans {
        if span.start >= span.end {
            report.push(
                "span-empty",
                lesson,
                step,
                format!("{side} span {span} is empty"),
            );
        } else if span.end > len {
            report.push(
                "span-out-of-bounds",
                lesson,
                step,
                format!("{side} span {span} exceeds source length {len}"),
            );
        } else {
            in_bounds.push(*span);
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.overlaps(b) {
                report.push(
                    "span-overlap",
                    lesson,
                    step,
                    format!("{side} spans {a} and {b} overlap"),
                );
            }
        }
    }
    if let Some(tokens) = tokens {
        for (span, aligned) in in_bounds
            .iter()
            .zip(spans_on_token_boundaries(tokens, &in_bounds))
        {
            if !aligned {
                report.push(
                    "span-misaligned",
                    lesson,
                    step,
                    format!(
                        "{side} span {span} ({:?}) does not fall on token boundaries",
                        span.slice(&snippet.source).unwrap_or_default()
                    ),
                );
            }
        }
    }
}

fn validate_questions(questions: &[Question], test: &str, report: &mut ValidationReport) {
    if questions.is_empty() {
        report.push("empty-test", None, None, format!("{test} has no questions"));
    }
    let mut ids = HashSet::new();
    for q in questions {
        if !ids.insert(q.id.as_str()) {
            report.push(
                "duplicate-question-id",
                None,
                None,
                format!("{test} question id `{}` appears more than once", q.id),
            );
        }
        if q.choices.len() < 2 {
            report.push(
                "question-choices",
                None,
                None,
                format!("{test} question `{}` needs at least two choices", q.id),
            );
        }
        let in_range = q.correct.iter().all(|&i| i < q.choices.len());
        let cardinality_ok = match q.kind {
            QuestionKind::SingleChoice => q.correct.len() == 1,
            QuestionKind::MultiAnswer => !q.correct.is_empty(),
        };
        if !in_range || !cardinality_ok {
            report.push(
                "question-correct",
                None,
                None,
                format!(
                    "{test} question `{}` has an invalid correct set {:?}",
                    q.id, q.correct
                ),
            );
        }
    }
}
