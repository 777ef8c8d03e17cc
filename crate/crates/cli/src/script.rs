//! Headless sessions driven by a JSON script.
//!
//! ```json
//! {
//!   "participant": "P01",
//!   "pretest":  { "q1": [0, 1], "q2": [2] },
//!   "steps":    ["next", "next", "prev", "next"],
//!   "posttest": { "q1": [0, 1, 2] },
//!   "survey":   { "s1": 5 }
//! }
//! ```
//!
//! Answers are submitted in the session's question order, as a learner would
//! see them. `steps` is optional; without it the lessons are walked with
//! `next` until the post-test opens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tutor_core::session::{Direction, TestPhase};
use tutor_core::{LessonPack, Phase, Session, SessionError};
use tutor_service::{SessionStore, StoreError};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub participant: Option<String>,
    #[serde(default)]
    pub pretest: BTreeMap<String, BTreeSet<usize>>,
    #[serde(default)]
    pub steps: Option<Vec<Direction>>,
    #[serde(default)]
    pub posttest: BTreeMap<String, BTreeSet<usize>>,
    #[serde(default)]
    pub survey: BTreeMap<String, u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Session(#[from] SessionError),
    #[error("{0}")]
    Store(#[from] StoreError),
    #[error("script has no {test} answer for `{question}`")]
    MissingAnswer {
        test: &'static str,
        question: String,
    },
    #[error("script has no survey level for `{0}`")]
    MissingLevel(String),
    #[error("scripted steps ended in phase {0}, before the post-test")]
    StepsEnded(Phase),
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub session_id: String,
    pub participant: String,
    pub seed: u64,
    pub phases: Vec<Phase>,
    pub lessons_visited: usize,
    pub steps_taken: usize,
    pub pretest_score: u32,
    pub posttest_score: u32,
    pub final_phase: Phase,
    pub replay_identical: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
}

struct Runner<'a> {
    pack: &'a LessonPack,
    session: Session,
    store: Option<&'a SessionStore>,
    phases: Vec<Phase>,
}

impl Runner<'_> {
    fn save(&self) -> Result<(), RunError> {
        if let Some(store) = self.store {
            store.persist(&self.session)?;
        }
        Ok(())
    }

    fn note_phase(&mut self) {
        if self.phases.last() != Some(&self.session.phase) {
            self.phases.push(self.session.phase);
        }
    }

    fn answer_all(
        &mut self,
        test: TestPhase,
        answers: &BTreeMap<String, BTreeSet<usize>>,
    ) -> Result<(), RunError> {
        let order = match test {
            TestPhase::Pretest => self.session.question_order.pretest.clone(),
            TestPhase::Posttest => self.session.question_order.posttest.clone(),
        };
        for question in order {
            let selection =
                answers
                    .get(&question)
                    .cloned()
                    .ok_or_else(|| RunError::MissingAnswer {
                        test: match test {
                            TestPhase::Pretest => "pretest",
                            TestPhase::Posttest => "posttest",
                        },
                        question: question.clone(),
                    })?;
            self.session
                .submit_answer(self.pack, &question, selection)?;
            self.save()?;
        }
        self.note_phase();
        Ok(())
    }
}

/// Plays `script` through a new session. With a store, every acknowledged
/// operation is persisted and the final record is reloaded from disk for the
/// replay check; without one the record makes a JSON round trip instead.
pub fn run(
    pack: &LessonPack,
    script: &Script,
    seed: u64,
    store: Option<&SessionStore>,
) -> Result<RunSummary, RunError> {
    let participant = script
        .participant
        .clone()
        .unwrap_or_else(|| "headless".to_string());
    let session = Session::create(pack, &participant, seed)?;
    let mut runner = Runner {
        pack,
        phases: vec![session.phase],
        session,
        store,
    };
    runner.save()?;

    runner.answer_all(TestPhase::Pretest, &script.pretest)?;

    let mut lessons = BTreeSet::new();
    let mut steps_taken = 0;
    let mut scripted = script.steps.clone().map(Vec::into_iter);
    while runner.session.phase == Phase::Lessons {
        lessons.insert(runner.session.lesson_cursor);
        let direction = match scripted.as_mut() {
            Some(steps) => steps
                .next()
                .ok_or(RunError::StepsEnded(runner.session.phase))?,
            None => Direction::Next,
        };
        runner.session.advance(pack, direction)?;
        runner.save()?;
        steps_taken += 1;
    }
    runner.note_phase();

    runner.answer_all(TestPhase::Posttest, &script.posttest)?;

    for statement in &pack.survey {
        let level = *script
            .survey
            .get(&statement.id)
            .ok_or_else(|| RunError::MissingLevel(statement.id.clone()))?;
        runner.session.submit_survey(pack, &statement.id, level)?;
        runner.save()?;
    }
    runner.note_phase();

    let session = &runner.session;
    let (recorded, record) = match store {
        Some(store) => {
            let reopened = SessionStore::open(store.root())?;
            let path = store.root().join(format!("{}.json", session.id));
            (
                reopened.restore(&session.id)?,
                Some(path.display().to_string()),
            )
        }
        None => {
            let json = serde_json::to_string(session).expect("sessions serialize");
            (
                serde_json::from_str(&json).expect("sessions deserialize"),
                None,
            )
        }
    };
    let replayed = Session::replay(pack, &recorded)?;

    Ok(RunSummary {
        session_id: session.id.clone(),
        participant,
        seed,
        phases: runner.phases.clone(),
        lessons_visited: lessons.len(),
        steps_taken,
        pretest_score: session.score(pack, TestPhase::Pretest)?.total,
        posttest_score: session.score(pack, TestPhase::Posttest)?.total,
        final_phase: session.phase,
        replay_identical: replayed == *session && recorded == *session,
        record,
    })
}
