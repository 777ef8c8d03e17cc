//! A learner's walk through a pack: pre-test, lessons, post-test, survey.
//!
//! [`Session`] is a single-writer state machine. Every successful mutation is
//! appended to its operation log with the time it happened, so a stored
//! session can be rebuilt from `(pack, id, participant, seed, created_at, log)`
//! alone; see [`Session::replay`]. Failed operations leave the session
//! untouched and are not logged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::lesson::{
    validate_pack, AnnotationKind, Lesson, LessonPack, OutputBox, Question, QuestionKind, Side,
    Step, ValidationReport,
};
use crate::shuffle::{fisher_yates, SplitMix64};
use crate::source::{Language, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "pretest")]
    PreTest,
    #[serde(rename = "lessons")]
    Lessons,
    #[serde(rename = "posttest")]
    PostTest,
    #[serde(rename = "survey")]
    Survey,
    #[serde(rename = "done")]
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::PreTest => "pretest",
            Phase::Lessons => "lessons",
            Phase::PostTest => "posttest",
            Phase::Survey => "survey",
            Phase::Done => "done",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestPhase {
    Pretest,
    Posttest,
}

impl TestPhase {
    fn phase(self) -> Phase {
        match self {
            TestPhase::Pretest => Phase::PreTest,
            TestPhase::Posttest => Phase::PostTest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Next,
    Prev,
}

/// A five-point agreement level, 1 = strongly disagree .. 5 = strongly agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LikertLevel(u8);

impl LikertLevel {
    pub const LABELS: [&'static str; 5] = [
        "Strongly Disagree",
        "Disagree",
        "Neutral",
        "Agree",
        "Strongly Agree",
    ];

    pub fn new(level: u8) -> Result<Self, SessionError> {
        if (1..=5).contains(&level) {
            Ok(LikertLevel(level))
        } else {
            Err(SessionError::LevelOutOfRange(level))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        Self::LABELS[usize::from(self.0 - 1)]
    }
}

impl TryFrom<u8> for LikertLevel {
    type Error = SessionError;

    fn try_from(level: u8) -> Result<Self, Self::Error> {
        LikertLevel::new(level)
    }
}

impl From<LikertLevel> for u8 {
    fn from(level: LikertLevel) -> u8 {
        level.0
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("pack failed validation with {} violation(s)", .0.violations.len())]
    InvalidPack(ValidationReport),
    #[error("session belongs to pack `{expected}`, not `{found}`")]
    PackMismatch { expected: String, found: String },
    #[error("operation not allowed in phase {actual}")]
    WrongPhase { actual: Phase },
    #[error("already at the first step of the lesson")]
    NoPrevious,
    #[error("`{0}` has already been answered")]
    AlreadyAnswered(String),
    #[error("bad selection: {0}")]
    BadSelection(String),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("unknown survey statement `{0}`")]
    UnknownStatement(String),
    #[error("Likert level {0} is outside 1..=5")]
    LevelOutOfRange(u8),
    #[error("report is available once the session is done (phase is {0})")]
    ReportUnavailable(Phase),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidPack(_) => "invalid-pack",
            SessionError::PackMismatch { .. } => "pack-mismatch",
            SessionError::WrongPhase { .. } => "wrong-phase",
            SessionError::NoPrevious => "no-previous",
            SessionError::AlreadyAnswered(_) => "already-answered",
            SessionError::BadSelection(_) => "bad-selection",
            SessionError::UnknownQuestion(_) => "unknown-question",
            SessionError::UnknownStatement(_) => "unknown-statement",
            SessionError::LevelOutOfRange(_) => "level-out-of-range",
            SessionError::ReportUnavailable(_) => "report-unavailable",
            SessionError::Score(_) => "missing-answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no answer recorded for question `{0}`")]
    MissingAnswer(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOrder {
    pub pretest: Vec<String>,
    pub posttest: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answers {
    pub pretest: BTreeMap<String, BTreeSet<usize>>,
    pub posttest: BTreeMap<String, BTreeSet<usize>>,
}

impl Answers {
    pub fn for_test(&self, test: TestPhase) -> &BTreeMap<String, BTreeSet<usize>> {
        match test {
            TestPhase::Pretest => &self.pretest,
            TestPhase::Posttest => &self.posttest,
        }
    }

    fn for_test_mut(&mut self, test: TestPhase) -> &mut BTreeMap<String, BTreeSet<usize>> {
        match test {
            TestPhase::Pretest => &mut self.pretest,
            TestPhase::Posttest => &mut self.posttest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    Answer {
        question_id: String,
        selection: BTreeSet<usize>,
    },
    Step {
        direction: Direction,
    },
    Survey {
        statement_id: String,
        level: LikertLevel,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub op: Operation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub pack_id: String,
    pub participant: String,
    pub seed: u64,
    pub phase: Phase,
    pub lesson_cursor: usize,
    pub step_cursor: usize,
    pub question_order: QuestionOrder,
    pub answers: Answers,
    pub survey_responses: BTreeMap<String, LikertLevel>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub log: Vec<LogEntry>,
}

/// What the caller learns after a recorded answer or survey response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub phase: Phase,
    pub phase_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_question: BTreeMap<String, u8>,
    pub total: u32,
}

/// All-or-nothing scoring: a question earns 1 only when the selection equals
/// the correct set exactly. Subsets and supersets both earn 0.
pub fn score_test(
    answers: &BTreeMap<String, BTreeSet<usize>>,
    key: &[Question],
) -> Result<ScoreReport, ScoreError> {
    let mut per_question = BTreeMap::new();
    for question in key {
        let selection = answers
            .get(&question.id)
            .ok_or_else(|| ScoreError::MissingAnswer(question.id.clone()))?;
        per_question.insert(
            question.id.clone(),
            u8::from(*selection == question.correct),
        );
    }
    let total = per_question.values().map(|&c| u32::from(c)).sum();
    Ok(ScoreReport {
        per_question,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub pack_id: String,
    pub participant: String,
    pub pretest: ScoreReport,
    pub posttest: ScoreReport,
    pub survey: BTreeMap<String, LikertLevel>,
}

impl Session {
    /// Starts a session in the pre-test with a fresh id and the current time.
    pub fn create(pack: &LessonPack, participant: &str, seed: u64) -> Result<Self, SessionError> {
        Self::create_at(
            pack,
            participant,
            seed,
            Uuid::new_v4().to_string(),
            Utc::now(),
        )
    }

    pub fn create_at(
        pack: &LessonPack,
        participant: &str,
        seed: u64,
        id: String,
        now: DateTime<Utc>,
    ) -> Result<Self, SessionError> {
        let report = validate_pack(pack);
        if !report.is_valid() {
            return Err(SessionError::InvalidPack(report));
        }
        Ok(Session {
            id,
            pack_id: pack.id.clone(),
            participant: participant.to_string(),
            seed,
            phase: Phase::PreTest,
            lesson_cursor: 0,
            step_cursor: 0,
            question_order: question_order(pack, seed),
            answers: Answers::default(),
            survey_responses: BTreeMap::new(),
            created_at: now,
            updated_at: now,
            log: Vec::new(),
        })
    }

    /// Rebuilds a session from its identity and operation log.
    pub fn replay(pack: &LessonPack, recorded: &Session) -> Result<Self, SessionError> {
        let mut session = Self::create_at(
            pack,
            &recorded.participant,
            recorded.seed,
            recorded.id.clone(),
            recorded.created_at,
        )?;
        for entry in &recorded.log {
            session.apply_at(pack, entry.op.clone(), entry.at)?;
        }
        Ok(session)
    }

    pub fn apply_at(
        &mut self,
        pack: &LessonPack,
        op: Operation,
        now: DateTime<Utc>,
    ) -> Result<(), SessionError> {
        match op {
            Operation::Answer {
                question_id,
                selection,
            } => self
                .submit_answer_at(pack, &question_id, selection, now)
                .map(drop),
            Operation::Step { direction } => self.advance_at(pack, direction, now).map(drop),
            Operation::Survey {
                statement_id,
                level,
            } => self
                .submit_survey_at(pack, &statement_id, level.value(), now)
                .map(drop),
        }
    }

    fn check_pack(&self, pack: &LessonPack) -> Result<(), SessionError> {
        if pack.id == self.pack_id {
            Ok(())
        } else {
            Err(SessionError::PackMismatch {
                expected: self.pack_id.clone(),
                found: pack.id.clone(),
            })
        }
    }

    fn record(&mut self, op: Operation, now: DateTime<Utc>) {
        self.updated_at = now;
        self.log.push(LogEntry { at: now, op });
    }

    pub fn advance(
        &mut self,
        pack: &LessonPack,
        direction: Direction,
    ) -> Result<RenderState, SessionError> {
        self.advance_at(pack, direction, Utc::now())
    }

    /// Moves the stepper. `Next` past a lesson's last step opens the next
    /// lesson; past the last lesson it starts the post-test. `Prev` never
    /// leaves the current lesson.
    pub fn advance_at(
        &mut self,
        pack: &LessonPack,
        direction: Direction,
        now: DateTime<Utc>,
    ) -> Result<RenderState, SessionError> {
        self.check_pack(pack)?;
        if self.phase != Phase::Lessons {
            return Err(SessionError::WrongPhase { actual: self.phase });
        }
        match direction {
            Direction::Prev => {
                if self.step_cursor == 0 {
                    return Err(SessionError::NoPrevious);
                }
                self.step_cursor -= 1;
            }
            Direction::Next => {
                let steps = pack.lessons[self.lesson_cursor].steps.len();
                if self.step_cursor + 1 < steps {
                    self.step_cursor += 1;
                } else if self.lesson_cursor + 1 < pack.lessons.len() {
                    self.lesson_cursor += 1;
                    self.step_cursor = 0;
                } else {
                    self.phase = Phase::PostTest;
                }
            }
        }
        self.record(Operation::Step { direction }, now);
        Ok(self.render(pack))
    }

    pub fn submit_answer(
        &mut self,
        pack: &LessonPack,
        question_id: &str,
        selection: BTreeSet<usize>,
    ) -> Result<Acknowledgement, SessionError> {
        self.submit_answer_at(pack, question_id, selection, Utc::now())
    }

    pub fn submit_answer_at(
        &mut self,
        pack: &LessonPack,
        question_id: &str,
        selection: BTreeSet<usize>,
        now: DateTime<Utc>,
    ) -> Result<Acknowledgement, SessionError> {
        self.check_pack(pack)?;
        let test = match self.phase {
            Phase::PreTest => TestPhase::Pretest,
            Phase::PostTest => TestPhase::Posttest,
            actual => return Err(SessionError::WrongPhase { actual }),
        };
        let question = pack
            .question(question_id)
            .ok_or_else(|| SessionError::UnknownQuestion(question_id.to_string()))?;
        if self.answers.for_test(test).contains_key(question_id) {
            return Err(SessionError::AlreadyAnswered(question_id.to_string()));
        }
        if selection.is_empty() {
            return Err(SessionError::BadSelection("selection is empty".into()));
        }
        if let Some(&bad) = selection.iter().find(|&&i| i >= question.choices.len()) {
            return Err(SessionError::BadSelection(format!(
                "choice {bad} does not exist (question has {})",
                question.choices.len()
            )));
        }
        if question.kind == QuestionKind::SingleChoice && selection.len() != 1 {
            return Err(SessionError::BadSelection(
                "single-choice questions take exactly one choice".into(),
            ));
        }

        self.answers
            .for_test_mut(test)
            .insert(question_id.to_string(), selection.clone());
        let before = self.phase;
        if self.answers.for_test(test).len() == pack.pretest.len() {
            self.phase = match test {
                TestPhase::Pretest => Phase::Lessons,
                TestPhase::Posttest => Phase::Survey,
            };
            self.lesson_cursor = 0;
            self.step_cursor = 0;
        }
        self.record(
            Operation::Answer {
                question_id: question_id.to_string(),
                selection,
            },
            now,
        );
        Ok(Acknowledgement {
            phase: self.phase,
            phase_changed: self.phase != before,
        })
    }

    pub fn submit_survey(
        &mut self,
        pack: &LessonPack,
        statement_id: &str,
        level: u8,
    ) -> Result<Acknowledgement, SessionError> {
        self.submit_survey_at(pack, statement_id, level, Utc::now())
    }

    pub fn submit_survey_at(
        &mut self,
        pack: &LessonPack,
        statement_id: &str,
        level: u8,
        now: DateTime<Utc>,
    ) -> Result<Acknowledgement, SessionError> {
        self.check_pack(pack)?;
        if self.phase != Phase::Survey {
            return Err(SessionError::WrongPhase { actual: self.phase });
        }
        if !pack.survey.iter().any(|s| s.id == statement_id) {
            return Err(SessionError::UnknownStatement(statement_id.to_string()));
        }
        if self.survey_responses.contains_key(statement_id) {
            return Err(SessionError::AlreadyAnswered(statement_id.to_string()));
        }
        let level = LikertLevel::new(level)?;
        self.survey_responses
            .insert(statement_id.to_string(), level);
        let changed = self.survey_responses.len() == pack.survey.len();
        if changed {
            self.phase = Phase::Done;
        }
        self.record(
            Operation::Survey {
                statement_id: statement_id.to_string(),
                level,
            },
            now,
        );
        Ok(Acknowledgement {
            phase: self.phase,
            phase_changed: changed,
        })
    }

    pub fn score(&self, pack: &LessonPack, test: TestPhase) -> Result<ScoreReport, SessionError> {
        self.check_pack(pack)?;
        Ok(score_test(self.answers.for_test(test), &pack.pretest)?)
    }

    /// Whether every question of `test` has been answered.
    pub fn completed(&self, test: TestPhase) -> bool {
        self.phase > test.phase()
    }

    pub fn report(&self, pack: &LessonPack) -> Result<SessionReport, SessionError> {
        if self.phase != Phase::Done {
            return Err(SessionError::ReportUnavailable(self.phase));
        }
        Ok(SessionReport {
            session_id: self.id.clone(),
            pack_id: self.pack_id.clone(),
            participant: self.participant.clone(),
            pretest: self.score(pack, TestPhase::Pretest)?,
            posttest: self.score(pack, TestPhase::Posttest)?,
            survey: self.survey_responses.clone(),
        })
    }

    /// What the client should display now. Never includes answer keys.
    pub fn render(&self, pack: &LessonPack) -> RenderState {
        match self.phase {
            Phase::PreTest => RenderState::Pretest(self.quiz_view(pack, TestPhase::Pretest)),
            Phase::PostTest => RenderState::Posttest(self.quiz_view(pack, TestPhase::Posttest)),
            Phase::Lessons => {
                let lesson = &pack.lessons[self.lesson_cursor];
                RenderState::Lessons(LessonView::new(
                    pack,
                    self.lesson_cursor,
                    lesson,
                    &lesson.steps[self.step_cursor],
                ))
            }
            Phase::Survey => {
                let next = pack
                    .survey
                    .iter()
                    .find(|s| !self.survey_responses.contains_key(&s.id))
                    .expect("survey phase has an unanswered statement");
                RenderState::Survey(SurveyView {
                    statement: StatementView {
                        id: next.id.clone(),
                        text: next.text.clone(),
                    },
                    answered: self.survey_responses.len(),
                    total: pack.survey.len(),
                    levels: (1..=5)
                        .map(|v| LevelView {
                            level: v,
                            label: LikertLevel::LABELS[usize::from(v - 1)].to_string(),
                        })
                        .collect(),
                })
            }
            Phase::Done => RenderState::Done(DoneView {
                session_id: self.id.clone(),
            }),
        }
    }

    fn quiz_view(&self, pack: &LessonPack, test: TestPhase) -> QuizView {
        let order = match test {
            TestPhase::Pretest => &self.question_order.pretest,
            TestPhase::Posttest => &self.question_order.posttest,
        };
        let answered = self.answers.for_test(test);
        let next_id = order
            .iter()
            .find(|id| !answered.contains_key(*id))
            .expect("test phase has an unanswered question");
        let question = pack
            .question(next_id)
            .expect("ordered ids come from the pack");
        QuizView {
            test,
            question: QuestionView {
                id: question.id.clone(),
                prompt: question.prompt.clone(),
                kind: question.kind,
                choices: question.choices.clone(),
            },
            answered: answered.len(),
            total: order.len(),
        }
    }
}

/// Pre-test order is the seeded shuffle of the pack's question ids; the
/// post-test order continues the same generator over the same ids.
pub fn question_order(pack: &LessonPack, seed: u64) -> QuestionOrder {
    let mut rng = SplitMix64::new(seed);
    let ids: Vec<String> = pack.pretest.iter().map(|q| q.id.clone()).collect();
    let mut pretest = ids.clone();
    fisher_yates(&mut pretest, &mut rng);
    let mut posttest = ids;
    fisher_yates(&mut posttest, &mut rng);
    QuestionOrder { pretest, posttest }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum RenderState {
    Pretest(QuizView),
    Lessons(LessonView),
    Posttest(QuizView),
    Survey(SurveyView),
    Done(DoneView),
}

impl RenderState {
    pub fn phase(&self) -> Phase {
        match self {
            RenderState::Pretest(_) => Phase::PreTest,
            RenderState::Lessons(_) => Phase::Lessons,
            RenderState::Posttest(_) => Phase::PostTest,
            RenderState::Survey(_) => Phase::Survey,
            RenderState::Done(_) => Phase::Done,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub id: String,
    pub prompt: String,
    pub kind: QuestionKind,
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizView {
    pub test: TestPhase,
    pub question: QuestionView,
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementView {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelView {
    pub level: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyView {
    pub statement: StatementView,
    pub answered: usize,
    pub total: usize,
    pub levels: Vec<LevelView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoneView {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub span: Span,
    pub kind: AnnotationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaneView {
    pub language: Language,
    pub source: String,
    pub highlights: Vec<Highlight>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationView {
    pub kind: AnnotationKind,
    pub side: Side,
    pub rule: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LessonView {
    pub lesson_id: String,
    pub lesson_title: String,
    pub lesson_index: usize,
    pub lesson_count: usize,
    pub step_index: usize,
    pub total_steps: usize,
    pub known: PaneView,
    pub target: PaneView,
    pub annotations: Vec<AnnotationView>,
    /// Present only on the lesson's final step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBox>,
    pub can_prev: bool,
}

impl LessonView {
    fn new(pack: &LessonPack, lesson_index: usize, lesson: &Lesson, step: &Step) -> Self {
        let side_kind = |covers: fn(Side) -> bool| {
            let strongest =
                |it: &mut dyn Iterator<Item = AnnotationKind>| it.max_by_key(|k| k.precedence());
            strongest(
                &mut step
                    .annotations
                    .iter()
                    .filter(|a| covers(a.side))
                    .map(|a| a.kind),
            )
            .or_else(|| strongest(&mut step.annotations.iter().map(|a| a.kind)))
            .unwrap_or(AnnotationKind::PositiveTransfer)
        };
        let pane =
            |snippet: &crate::lesson::Snippet, spans: &[Span], kind: AnnotationKind| PaneView {
                language: snippet.language,
                source: snippet.source.clone(),
                highlights: spans.iter().map(|&span| Highlight { span, kind }).collect(),
            };
        let last = step.index + 1 == lesson.steps.len();
        LessonView {
            lesson_id: lesson.id.clone(),
            lesson_title: lesson.title.clone(),
            lesson_index,
            lesson_count: pack.lessons.len(),
            step_index: step.index,
            total_steps: lesson.steps.len(),
            known: pane(
                &lesson.known_snippet,
                &step.known_spans,
                side_kind(Side::covers_known),
            ),
            target: pane(
                &lesson.target_snippet,
                &step.target_spans,
                side_kind(Side::covers_target),
            ),
            annotations: step
                .annotations
                .iter()
                .map(|a| AnnotationView {
                    kind: a.kind,
                    side: a.side,
                    rule: a.rule.clone(),
                    text: a.text.clone(),
                })
                .collect(),
            output: if last { lesson.output.clone() } else { None },
            can_prev: step.index > 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shipped;
    use chrono::TimeZone;

    fn t(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    fn new_session(seed: u64) -> (LessonPack, Session) {
        let pack = shipped::pack();
        let s = Session::create_at(&pack, "p1", seed, "s-1".into(), t(0)).unwrap();
        (pack, s)
    }

    fn sel(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    fn finish_pretest(pack: &LessonPack, s: &mut Session) {
        for q in s.question_order.pretest.clone() {
            s.submit_answer_at(pack, &q, sel(&[0]), t(1)).unwrap();
        }
    }

    #[test]
    fn creation_is_deterministic_per_seed() {
        let (pack, a) = new_session(42);
        let b = Session::create_at(&pack, "p1", 42, "other".into(), t(5)).unwrap();
        assert_eq!(a.question_order, b.question_order);
        assert_eq!(a.phase, Phase::PreTest);
        assert_eq!((a.lesson_cursor, a.step_cursor), (0, 0));
        // Frozen from an independent implementation of the shuffle rules.
        assert_eq!(
            a.question_order.pretest,
            ["q3", "q5", "q7", "q1", "q4", "q2", "q6"]
        );
        assert_eq!(
            a.question_order.posttest,
            ["q2", "q5", "q4", "q6", "q1", "q7", "q3"]
        );
        let (_, c) = new_session(43);
        assert_eq!(
            c.question_order.pretest,
            ["q6", "q5", "q1", "q4", "q3", "q7", "q2"]
        );
        assert_ne!(a.question_order.pretest, c.question_order.pretest);
    }

    #[test]
    fn invalid_pack_is_rejected() {
        let mut pack = shipped::pack();
        pack.posttest.pop();
        assert!(matches!(
            Session::create(&pack, "p1", 1),
            Err(SessionError::InvalidPack(_))
        ));
    }

    #[test]
    fn pretest_renders_in_seeded_order_without_keys() {
        let (pack, s) = new_session(42);
        let state = s.render(&pack);
        match &state {
            RenderState::Pretest(view) => assert_eq!(view.question.id, "q3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!serde_json::to_string(&state).unwrap().contains("correct"));
    }

    #[test]
    fn answering_rules() {
        let (pack, mut s) = new_session(42);
        assert!(matches!(
            s.submit_answer_at(&pack, "q1", sel(&[]), t(1)),
            Err(SessionError::BadSelection(_))
        ));
        assert!(matches!(
            s.submit_answer_at(&pack, "q3", sel(&[0, 1]), t(1)),
            Err(SessionError::BadSelection(_))
        ));
        assert!(matches!(
            s.submit_answer_at(&pack, "q3", sel(&[9]), t(1)),
            Err(SessionError::BadSelection(_))
        ));
        assert!(matches!(
            s.submit_answer_at(&pack, "q99", sel(&[0]), t(1)),
            Err(SessionError::UnknownQuestion(_))
        ));
        assert!(s.log.is_empty());
        s.submit_answer_at(&pack, "q1", sel(&[0, 1]), t(1)).unwrap();
        assert!(matches!(
            s.submit_answer_at(&pack, "q1", sel(&[0]), t(2)),
            Err(SessionError::AlreadyAnswered(_))
        ));
        assert!(matches!(
            s.advance_at(&pack, Direction::Next, t(2)),
            Err(SessionError::WrongPhase {
                actual: Phase::PreTest
            })
        ));
    }

    #[test]
    fn last_pretest_answer_opens_lessons() {
        let (pack, mut s) = new_session(7);
        let order = s.question_order.pretest.clone();
        for q in &order[..order.len() - 1] {
            let ack = s.submit_answer_at(&pack, q, sel(&[0]), t(1)).unwrap();
            assert!(!ack.phase_changed);
        }
        let ack = s
            .submit_answer_at(&pack, order.last().unwrap(), sel(&[0]), t(2))
            .unwrap();
        assert_eq!(
            ack,
            Acknowledgement {
                phase: Phase::Lessons,
                phase_changed: true
            }
        );
    }

    #[test]
    fn stepping() {
        let (pack, mut s) = new_session(1);
        finish_pretest(&pack, &mut s);
        assert!(matches!(
            s.advance_at(&pack, Direction::Prev, t(3)),
            Err(SessionError::NoPrevious)
        ));

        let state = s.advance_at(&pack, Direction::Next, t(3)).unwrap();
        let RenderState::Lessons(view) = state else {
            panic!("expected lesson view")
        };
        assert_eq!((view.lesson_index, view.step_index), (0, 1));
        assert_eq!(view.known.highlights[0].span, Span::new(3, 4));
        assert_eq!(view.target.highlights[0].span, Span::new(3, 5));
        assert_eq!(
            view.target.highlights[0].kind,
            AnnotationKind::PositiveTransfer
        );
        assert!(view.output.is_none());
        assert!(view.can_prev);

        // Walk to the end of lesson 0: output box shows on the final step only.
        for _ in 2..pack.lessons[0].steps.len() {
            s.advance_at(&pack, Direction::Next, t(4)).unwrap();
        }
        let RenderState::Lessons(view) = s.render(&pack) else {
            panic!()
        };
        assert!(view.output.is_some());
        // Prev stays within the lesson and hides the output again.
        let RenderState::Lessons(view) = s.advance_at(&pack, Direction::Prev, t(5)).unwrap() else {
            panic!()
        };
        assert!(view.output.is_none());
        s.advance_at(&pack, Direction::Next, t(5)).unwrap();
        let RenderState::Lessons(view) = s.advance_at(&pack, Direction::Next, t(6)).unwrap() else {
            panic!()
        };
        assert_eq!((view.lesson_index, view.step_index), (1, 0));
        assert!(matches!(
            s.advance_at(&pack, Direction::Prev, t(6)),
            Err(SessionError::NoPrevious)
        ));
    }

    #[test]
    fn gotcha_and_new_fact_highlights() {
        let (pack, mut s) = new_session(1);
        finish_pretest(&pack, &mut s);
        s.lesson_cursor = 1;
        s.step_cursor = 1;
        let RenderState::Lessons(view) = s.render(&pack) else {
            panic!()
        };
        assert_eq!(
            view.known.highlights[0].kind,
            AnnotationKind::NegativeTransfer
        );
        assert_eq!(view.annotations.len(), 2);
        s.step_cursor = 2;
        let RenderState::Lessons(view) = s.render(&pack) else {
            panic!()
        };
        assert_eq!(view.target.highlights[0].kind, AnnotationKind::NewFact);
        assert_eq!(
            view.target.highlights[0].span.slice(&view.target.source),
            Some("c(")
        );
    }

    #[test]
    fn final_step_of_last_lesson_starts_posttest() {
        let (pack, mut s) = new_session(42);
        finish_pretest(&pack, &mut s);
        for _ in 0..pack.total_steps() - 1 {
            s.advance_at(&pack, Direction::Next, t(3)).unwrap();
        }
        assert_eq!(
            (s.lesson_cursor, s.step_cursor),
            (3, pack.lessons[3].steps.len() - 1)
        );
        let state = s.advance_at(&pack, Direction::Next, t(4)).unwrap();
        assert_eq!(s.phase, Phase::PostTest);
        let RenderState::Posttest(view) = state else {
            panic!()
        };
        assert_eq!(view.question.id, s.question_order.posttest[0]);
    }

    fn finished(seed: u64) -> (LessonPack, Session) {
        let (pack, mut s) = new_session(seed);
        finish_pretest(&pack, &mut s);
        for _ in 0..pack.total_steps() {
            s.advance_at(&pack, Direction::Next, t(3)).unwrap();
        }
        for q in s.question_order.posttest.clone() {
            let correct = pack.question(&q).unwrap().correct.clone();
            s.submit_answer_at(&pack, &q, correct, t(4)).unwrap();
        }
        assert_eq!(s.phase, Phase::Survey);
        (pack, s)
    }

    #[test]
    fn survey_flow() {
        let (pack, mut s) = finished(3);
        assert!(matches!(
            s.submit_survey_at(&pack, "s1", 0, t(5)),
            Err(SessionError::LevelOutOfRange(0))
        ));
        assert!(matches!(
            s.submit_survey_at(&pack, "s1", 6, t(5)),
            Err(SessionError::LevelOutOfRange(6))
        ));
        s.submit_survey_at(&pack, "s1", 5, t(5)).unwrap();
        assert_eq!(s.survey_responses["s1"].label(), "Strongly Agree");
        assert!(matches!(
            s.submit_survey_at(&pack, "s1", 4, t(5)),
            Err(SessionError::AlreadyAnswered(_))
        ));
        assert!(matches!(
            s.report(&pack),
            Err(SessionError::ReportUnavailable(Phase::Survey))
        ));
        let ids: Vec<_> = pack.survey.iter().skip(1).map(|x| x.id.clone()).collect();
        for (i, id) in ids.iter().enumerate() {
            let ack = s.submit_survey_at(&pack, id, 4, t(6)).unwrap();
            assert_eq!(ack.phase_changed, i + 1 == ids.len());
        }
        assert_eq!(s.phase, Phase::Done);
        let report = s.report(&pack).unwrap();
        assert_eq!(report.posttest.total, 7);
        assert!(matches!(
            s.submit_survey_at(&pack, "s2", 4, t(7)),
            Err(SessionError::WrongPhase {
                actual: Phase::Done
            })
        ));
    }

    #[test]
    fn replay_reproduces_state() {
        let (pack, mut s) = finished(11);
        s.submit_survey_at(&pack, "s1", 2, t(9)).unwrap();
        let replayed = Session::replay(&pack, &s).unwrap();
        assert_eq!(replayed, s);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<Session>(&json).unwrap(), s);
    }

    #[test]
    fn wrong_pack_is_refused() {
        let (mut other, mut s) = new_session(1);
        other.id = "elsewhere".into();
        assert!(matches!(
            s.submit_answer_at(&other, "q1", sel(&[0]), t(1)),
            Err(SessionError::PackMismatch { .. })
        ));
    }

    fn multi(correct: &[usize]) -> Question {
        Question {
            id: "m".into(),
            prompt: "pick".into(),
            kind: QuestionKind::MultiAnswer,
            choices: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            correct: sel(correct),
        }
    }

    #[test]
    fn all_or_nothing_scoring() {
        let key = vec![multi(&[0, 2])];
        let answer = |s: &[usize]| BTreeMap::from([("m".to_string(), sel(s))]);
        assert_eq!(score_test(&answer(&[0, 2]), &key).unwrap().total, 1);
        assert_eq!(score_test(&answer(&[0]), &key).unwrap().total, 0);
        assert_eq!(score_test(&answer(&[0, 2, 3]), &key).unwrap().total, 0);
        assert_eq!(
            score_test(&BTreeMap::new(), &key),
            Err(ScoreError::MissingAnswer("m".into()))
        );
    }
}
