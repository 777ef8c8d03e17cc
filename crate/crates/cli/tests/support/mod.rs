//! Shared fixtures for the CLI and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tutor_core::lesson::Question;
use tutor_core::session::Direction;
use tutor_core::{shipped, LessonPack, Phase, Session};
use tutor_service::SessionStore;

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped_pack_path() -> PathBuf {
    repo().join("packs/python-to-r.pack.json")
}

pub fn lint_fixture(name: &str) -> PathBuf {
    repo().join("crates/core/tests/fixtures/lint").join(name)
}

pub fn tutor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutor"))
        .args(args)
        .env_remove("TUTOR_STORE")
        .output()
        .expect("tutor binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub const PARTICIPANTS: usize = 20;

/// Which participants answer each question correctly, before and after.
/// Chosen so the column totals are pre (0,13,0,10,0,0,0) and post−pre
/// (18,2,20,3,20,18,1), with every participant scoring higher afterwards.
pub fn cohort_marks(i: usize) -> ([bool; 7], [bool; 7]) {
    let pre = [false, i < 13, false, i < 10, false, false, false];
    let post = [i < 18, i < 15, true, i < 13, true, i < 18, i == 0];
    (pre, post)
}

/// Reference survey counts (SD, D, N, A, SA) per statement, 20 responses each.
pub const SURVEY_COUNTS: [[u32; 5]; 7] = [
    [0, 0, 1, 5, 14],
    [0, 1, 3, 2, 14],
    [1, 0, 1, 6, 12],
    [0, 0, 1, 6, 13],
    [0, 2, 0, 6, 12],
    [3, 0, 1, 8, 8],
    [2, 0, 3, 7, 8],
];

/// Level that participant `i` gives statement `k`, spreading each row's
/// counts over the 20 participants.
pub fn survey_level(k: usize, i: usize) -> u8 {
    let mut seen = 0;
    for (level, &count) in SURVEY_COUNTS[k].iter().enumerate() {
        seen += count as usize;
        if i < seen {
            return level as u8 + 1;
        }
    }
    unreachable!("each row sums to 20")
}

fn selection(q: &Question, right: bool) -> BTreeSet<usize> {
    if right {
        q.correct.clone()
    } else {
        let wrong = (0..q.choices.len())
            .find(|c| !q.correct.contains(c))
            .expect("a wrong choice");
        BTreeSet::from([wrong])
    }
}

/// Drives one participant through the engine.
pub fn study_session(pack: &LessonPack, i: usize) -> Session {
    let (pre, post) = cohort_marks(i);
    let mut s = Session::create(pack, &format!("P{:02}", i + 1), i as u64).unwrap();
    for (marks, phase) in [(pre, Phase::PreTest), (post, Phase::PostTest)] {
        if phase == Phase::PostTest {
            while s.phase == Phase::Lessons {
                s.advance(pack, Direction::Next).unwrap();
            }
        }
        let order = match phase {
            Phase::PreTest => s.question_order.pretest.clone(),
            _ => s.question_order.posttest.clone(),
        };
        for id in order {
            let idx = pack.pretest.iter().position(|q| q.id == id).unwrap();
            let sel = selection(&pack.pretest[idx], marks[idx]);
            s.submit_answer(pack, &id, sel).unwrap();
        }
    }
    for (k, st) in pack.survey.iter().enumerate() {
        s.submit_survey(pack, &st.id, survey_level(k, i)).unwrap();
    }
    assert_eq!(s.phase, Phase::Done);
    s
}

/// Writes the 20 fixture sessions to `dir` and returns them.
pub fn write_study(dir: &Path) -> Vec<Session> {
    let pack = shipped::pack();
    let store = SessionStore::open(dir).unwrap();
    (0..PARTICIPANTS)
        .map(|i| {
            let s = study_session(&pack, i);
            store.persist(&s).unwrap();
            s
        })
        .collect()
}
