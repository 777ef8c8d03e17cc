//! Pre/post comparison and survey summaries over finished sessions.
//!
//! The signed-rank statistic is reported in centered form,
//! `S = W+ - R/2`, where `W+` is the rank sum of positive differences and `R`
//! the sum of all ranks in play. With plain ranks `R/2 = n(n+1)/4`, so twenty
//! all-positive differences give `S = 210 - 105 = 105`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::lesson::{LessonPack, Question};
use crate::session::{score_test, LikertLevel, ScoreError, ScoreReport, Session, TestPhase};

/// Largest nonzero-difference count for which the exact distribution is used.
pub const EXACT_LIMIT: usize = 25;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("score {value} for `{participant}` is outside 0..={max}")]
    ScoreOutOfRange {
        participant: String,
        value: u32,
        max: u32,
    },
    #[error("a score report has no entry for question `{0}`")]
    MissingQuestion(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedScores {
    pub participants: Vec<String>,
    pub pre: Vec<u32>,
    pub post: Vec<u32>,
}

impl PairedScores {
    pub fn new(
        participants: Vec<String>,
        pre: Vec<u32>,
        post: Vec<u32>,
        question_count: u32,
    ) -> Result<Self, AnalyticsError> {
        for other in [pre.len(), post.len()] {
            if other != participants.len() {
                return Err(AnalyticsError::LengthMismatch {
                    left: participants.len(),
                    right: other,
                });
            }
        }
        for (i, &value) in pre.iter().chain(&post).enumerate() {
            if value > question_count {
                return Err(AnalyticsError::ScoreOutOfRange {
                    participant: participants[i % participants.len()].clone(),
                    value,
                    max: question_count,
                });
            }
        }
        Ok(PairedScores {
            participants,
            pre,
            post,
        })
    }

    /// `post - pre` per participant.
    pub fn differences(&self) -> Vec<i64> {
        self.pre
            .iter()
            .zip(&self.post)
            .map(|(&a, &b)| i64::from(b) - i64::from(a))
            .collect()
    }
}

/// How zero differences enter the ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then drop their ranks.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    #[serde(rename = "S")]
    pub statistic_s: f64,
    pub p_value: f64,
    pub n_nonzero: usize,
    pub method: TestMethod,
    /// Every difference was zero; S and p are fixed at 0 and 1.
    pub degenerate: bool,
    pub alpha: f64,
    pub significant: bool,
}

/// Ranks of `values` (1-based, ties get the mean rank), doubled so they stay integral.
pub fn doubled_midranks(values: &[u64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end+1 share (start+1 + end+1) / 2
        let doubled = (start + end + 2) as u64;
        for &i in &order[start..=end] {
            ranks[i] = doubled;
        }
        start = end + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(pairs: &PairedScores, alpha: f64) -> StatResult {
    wilcoxon_signed_rank_with(pairs, alpha, ZeroMethod::default())
}

pub fn wilcoxon_signed_rank_with(
    pairs: &PairedScores,
    alpha: f64,
    zeros: ZeroMethod,
) -> StatResult {
    signed_rank_from_differences(&pairs.differences(), alpha, zeros)
}

pub fn signed_rank_from_differences(diffs: &[i64], alpha: f64, zeros: ZeroMethod) -> StatResult {
    let ranked: Vec<i64> = match zeros {
        ZeroMethod::Wilcox => diffs.iter().copied().filter(|&d| d != 0).collect(),
        ZeroMethod::Pratt => diffs.to_vec(),
    };
    let ranks = doubled_midranks(&ranked.iter().map(|d| d.unsigned_abs()).collect::<Vec<_>>());
    let (signs, ranks): (Vec<bool>, Vec<u64>) = ranked
        .iter()
        .zip(ranks)
        .filter(|(&d, _)| d != 0)
        .map(|(&d, r)| (d > 0, r))
        .unzip();

    let n = ranks.len();
    if n == 0 {
        return StatResult {
            statistic_s: 0.0,
            p_value: 1.0,
            n_nonzero: 0,
            method: TestMethod::Exact,
            degenerate: true,
            alpha,
            significant: false,
        };
    }

    let total: u64 = ranks.iter().sum();
    let positive: u64 = signs
        .iter()
        .zip(&ranks)
        .filter(|(&s, _)| s)
        .map(|(_, &r)| r)
        .sum();
    // Doubled ranks: S = (2W+ - R) / 2 in ordinary units, i.e. (2*pos - total) / 4 here.
    let centered2 = 2 * positive as i64 - total as i64;
    let statistic_s = centered2 as f64 / 4.0;

    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_two_sided(&ranks, positive), TestMethod::Exact)
    } else {
        let variance: f64 = ranks.iter().map(|&r| (r as f64 / 2.0).powi(2)).sum::<f64>() / 4.0;
        let z = statistic_s / variance.sqrt();
        let normal = Normal::standard();
        (
            (2.0 * normal.sf(z.abs())).min(1.0),
            TestMethod::NormalApprox,
        )
    };

    StatResult {
        statistic_s,
        p_value,
        n_nonzero: n,
        method,
        degenerate: false,
        alpha,
        significant: p_value < alpha,
    }
}

/// P(|W - mean| >= |observed - mean|) under random signs, with `ranks` doubled.
fn exact_two_sided(ranks: &[u64], observed: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    // counts[w] = number of sign assignments whose positive doubled-rank sum is w
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for w in (0..=reach).rev() {
            if counts[w] > 0 {
                counts[w + r] += counts[w];
            }
        }
        reach += r;
    }
    let distance = (2 * observed as i64 - total as i64).unsigned_abs();
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(w, _)| (2 * *w as i64 - total as i64).unsigned_abs() >= distance)
        .map(|(_, &c)| c)
        .sum();
    (extreme as f64 / 2f64.powi(ranks.len() as i32)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub question_id: String,
    pub pre_correct: u32,
    pub post_correct: u32,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub participants: usize,
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    pub fn pre_totals(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.pre_correct).collect()
    }

    pub fn deltas(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.delta).collect()
    }
}

/// Per-question correct counts before, and the change after. Reports are
/// paired by position.
pub fn delta_table(
    pre_reports: &[ScoreReport],
    post_reports: &[ScoreReport],
    key: &[Question],
) -> Result<DeltaTable, AnalyticsError> {
    if pre_reports.len() != post_reports.len() {
        return Err(AnalyticsError::LengthMismatch {
            left: pre_reports.len(),
            right: post_reports.len(),
        });
    }
    let count = |reports: &[ScoreReport], id: &str| -> Result<u32, AnalyticsError> {
        reports.iter().try_fold(0u32, |acc, r| {
            r.per_question
                .get(id)
                .map(|&c| acc + u32::from(c))
                .ok_or_else(|| AnalyticsError::MissingQuestion(id.to_string()))
        })
    };
    let rows = key
        .iter()
        .map(|q| {
            let pre_correct = count(pre_reports, &q.id)?;
            let post_correct = count(post_reports, &q.id)?;
            Ok(DeltaRow {
                question_id: q.id.clone(),
                pre_correct,
                post_correct,
                delta: i64::from(post_correct) - i64::from(pre_correct),
            })
        })
        .collect::<Result<_, AnalyticsError>>()?;
    Ok(DeltaTable {
        participants: pre_reports.len(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertCounts {
    pub sd: u32,
    pub d: u32,
    pub n: u32,
    pub a: u32,
    pub sa: u32,
}

impl LikertCounts {
    pub fn new(sd: u32, d: u32, n: u32, a: u32, sa: u32) -> Self {
        LikertCounts { sd, d, n, a, sa }
    }

    pub fn tally<'a>(levels: impl IntoIterator<Item = &'a LikertLevel>) -> Self {
        let mut c = LikertCounts::default();
        for level in levels {
            match level.value() {
                1 => c.sd += 1,
                2 => c.d += 1,
                3 => c.n += 1,
                4 => c.a += 1,
                _ => c.sa += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u32 {
        self.sd + self.d + self.n + self.a + self.sa
    }
}

/// Integer percentage of `part / whole`, halves rounded up. Zero when `whole` is zero.
pub fn percent_half_up(part: u32, whole: u32) -> u32 {
    if whole == 0 {
        return 0;
    }
    let (part, whole) = (u64::from(part), u64::from(whole));
    ((200 * part + whole) / (2 * whole)) as u32
}

/// Signed per-level shares for a diverging bar; disagreement is negative.
/// Neutral is left out of the bar but stays in the denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStacked {
    pub sd: i32,
    pub d: i32,
    pub a: i32,
    pub sa: i32,
}

impl NetStacked {
    pub fn is_empty(&self) -> bool {
        *self == NetStacked::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRow {
    pub statement_id: String,
    pub counts: LikertCounts,
    pub total: u32,
    pub percent_agree: u32,
    pub net: NetStacked,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub statements: Vec<LikertRow>,
}

pub fn summarize_likert(responses: &[(String, LikertCounts)]) -> LikertSummary {
    let statements = responses
        .iter()
        .map(|(id, c)| {
            let total = c.total();
            let share = |k: u32| percent_half_up(k, total) as i32;
            LikertRow {
                statement_id: id.clone(),
                counts: *c,
                total,
                percent_agree: percent_half_up(c.a + c.sa, total),
                net: NetStacked {
                    sd: -share(c.sd),
                    d: -share(c.d),
                    a: share(c.a),
                    sa: share(c.sa),
                },
            }
        })
        .collect();
    LikertSummary { statements }
}

/// Everything the `stats` command and endpoint report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub pack_id: String,
    pub participants: Vec<String>,
    pub scores: PairedScores,
    pub delta_table: DeltaTable,
    pub wilcoxon: StatResult,
    pub likert: LikertSummary,
}

/// Builds the report from sessions of `pack` that finished the post-test.
/// Others are skipped. Sessions are ordered by participant, then id.
pub fn study_report(
    pack: &LessonPack,
    sessions: &[Session],
    alpha: f64,
) -> Result<StudyReport, AnalyticsError> {
    let mut done: Vec<&Session> = sessions
        .iter()
        .filter(|s| s.pack_id == pack.id && s.completed(TestPhase::Posttest))
        .collect();
    done.sort_by(|a, b| (&a.participant, &a.id).cmp(&(&b.participant, &b.id)));

    let mut pre = Vec::with_capacity(done.len());
    let mut post = Vec::with_capacity(done.len());
    for s in &done {
        pre.push(score_test(&s.answers.pretest, &pack.pretest)?);
        post.push(score_test(&s.answers.posttest, &pack.pretest)?);
    }
    let participants: Vec<String> = done.iter().map(|s| s.participant.clone()).collect();
    let scores = PairedScores::new(
        participants.clone(),
        pre.iter().map(|r| r.total).collect(),
        post.iter().map(|r| r.total).collect(),
        pack.pretest.len() as u32,
    )?;
    let responses: Vec<(String, LikertCounts)> = pack
        .survey
        .iter()
        .map(|st| {
            let levels = done.iter().filter_map(|s| s.survey_responses.get(&st.id));
            (st.id.clone(), LikertCounts::tally(levels))
        })
        .collect();

    Ok(StudyReport {
        pack_id: pack.id.clone(),
        participants,
        wilcoxon: wilcoxon_signed_rank(&scores, alpha),
        delta_table: delta_table(&pre, &post, &pack.pretest)?,
        scores,
        likert: summarize_likert(&responses),
    })
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(
            out,
            "pack {} ({} participants)",
            self.pack_id,
            self.participants.len()
        )?;
        writeln!(out)?;
        writeln!(
            out,
            "{:<10} {:>5} {:>5} {:>6}",
            "question", "pre", "post", "delta"
        )?;
        for row in &self.delta_table.rows {
            writeln!(
                out,
                "{:<10} {:>5} {:>5} {:>+6}",
                row.question_id, row.pre_correct, row.post_correct, row.delta
            )?;
        }
        writeln!(out)?;
        let w = &self.wilcoxon;
        let method = match w.method {
            TestMethod::Exact => "exact",
            TestMethod::NormalApprox => "normal approximation",
        };
        writeln!(
            out,
            "signed-rank: S = {}, p = {:.3e} ({method}, n = {}){}",
            w.statistic_s,
            w.p_value,
            w.n_nonzero,
            if w.degenerate {
                ", all differences zero"
            } else {
                ""
            }
        )?;
        writeln!(
            out,
            "significant at alpha = {}: {}",
            w.alpha,
            if w.significant { "yes" } else { "no" }
        )?;
        writeln!(out)?;
        writeln!(
            out,
            "{:<10} {:>7} {:>3} {:>3} {:>3} {:>3} {:>3}  net SD/D/A/SA",
            "statement", "% agree", "SD", "D", "N", "A", "SA"
        )?;
        for row in &self.likert.statements {
            let c = row.counts;
            writeln!(
                out,
                "{:<10} {:>6}% {:>3} {:>3} {:>3} {:>3} {:>3}  {}/{}/{}/{}",
                row.statement_id,
                row.percent_agree,
                c.sd,
                c.d,
                c.n,
                c.a,
                c.sa,
                row.net.sd,
                row.net.d,
                row.net.a,
                row.net.sa
            )?;
        }
        f.write_str(&out)
    }
}

/// Groups stored sessions by pack id, preserving first-seen order of packs.
pub fn sessions_by_pack(sessions: &[Session]) -> BTreeMap<String, Vec<Session>> {
    let mut map: BTreeMap<String, Vec<Session>> = BTreeMap::new();
    for s in sessions {
        map.entry(s.pack_id.clone()).or_default().push(s.clone());
    }
    map
}
