//! Two-phase human evaluation sessions.
//!
//! Phase [`Phase::RateAttributes`]: an annotator rates every hint of a
//! question on five attributes (1 to 5) and reports whether the answer was
//! found with two search engines. Phase [`Phase::AnswerWithHints`]: the
//! annotator first answers without hints, then reveals hints one at a time,
//! each reveal only after a wrong or blank attempt at the current level, and
//! may skip once every hint is shown.
//!
//! All state changes are [`Event`]s appended to a log; replaying the log
//! rebuilds the same [`AnnotationStore`]. Hint positions (`hint_idx`, `k`)
//! are 0-based.

pub mod log;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hints::answers_match;
use crate::record::QuestionRecord;

pub use log::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Relevance,
    Readability,
    Ambiguity,
    Convergence,
    Familiarity,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Relevance,
        Attribute::Readability,
        Attribute::Ambiguity,
        Attribute::Convergence,
        Attribute::Familiarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Relevance => "relevance",
            Attribute::Readability => "readability",
            Attribute::Ambiguity => "ambiguity",
            Attribute::Convergence => "convergence",
            Attribute::Familiarity => "familiarity",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown attribute {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RateAttributes,
    AnswerWithHints,
}

/// One exported rating: a single annotator's score for one attribute of
/// one hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub annotator_id: String,
    pub q_id: String,
    pub hint_idx: usize,
    pub attribute: Attribute,
    pub rating: u8,
}

/// The five attribute scores plus the search-engine flags for one hint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintRatings {
    pub relevance: u8,
    pub readability: u8,
    pub ambiguity: u8,
    pub convergence: u8,
    pub familiarity: u8,
    pub google_found: bool,
    pub bing_found: bool,
}

impl HintRatings {
    pub fn get(&self, a: Attribute) -> u8 {
        match a {
            Attribute::Relevance => self.relevance,
            Attribute::Readability => self.readability,
            Attribute::Ambiguity => self.ambiguity,
            Attribute::Convergence => self.convergence,
            Attribute::Familiarity => self.familiarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub answer: String,
    pub correct: bool,
    /// Hints visible when the attempt was made.
    pub hints_revealed: usize,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStatus {
    Open,
    Correct,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionState {
    pub q_id: String,
    pub status: QuestionStatus,
    pub revealed_hint_count: usize,
    pub attempts: Vec<Attempt>,
    pub ratings: BTreeMap<usize, HintRatings>,
}

impl QuestionState {
    fn new(q_id: String) -> Self {
        QuestionState {
            q_id,
            status: QuestionStatus::Open,
            revealed_hint_count: 0,
            attempts: Vec::new(),
            ratings: BTreeMap::new(),
        }
    }

    pub fn answered_before_hints(&self) -> bool {
        self.status == QuestionStatus::Correct && self.revealed_hint_count == 0
    }

    fn attempted_at_current_level(&self) -> bool {
        self.attempts
            .iter()
            .any(|a| a.hints_revealed == self.revealed_hint_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub annotator_id: String,
    pub phase: Phase,
    pub questions: Vec<QuestionState>,
}

impl Session {
    fn question(&self, q_id: &str) -> Option<&QuestionState> {
        self.questions.iter().find(|q| q.q_id == q_id)
    }

    fn question_mut(&mut self, q_id: &str) -> Option<&mut QuestionState> {
        self.questions.iter_mut().find(|q| q.q_id == q_id)
    }
}

/// Every state change, in log order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        annotator_id: String,
        phase: Phase,
        questions: Vec<String>,
    },
    Attempted {
        session_id: String,
        q_id: String,
        attempt: Attempt,
    },
    Revealed {
        session_id: String,
        q_id: String,
        k: usize,
    },
    Rated {
        session_id: String,
        q_id: String,
        hint_idx: usize,
        ratings: HintRatings,
    },
    Skipped {
        session_id: String,
        q_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("not found: {0}")]
    NotFound(String),
    /// The request is well formed but breaks the session protocol.
    #[error("protocol violation: {0}")]
    Conflict(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("event log: {0}")]
    Storage(String),
}

impl ProtocolError {
    /// Short machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::NotFound(_) => "not_found",
            ProtocolError::Conflict(_) => "protocol_violation",
            ProtocolError::BadRequest(_) => "bad_request",
            ProtocolError::Storage(_) => "storage_error",
        }
    }
}

type PResult<T> = std::result::Result<T, ProtocolError>;

/// What an annotator sees for a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub q_id: String,
    pub question: String,
    pub total_hints: usize,
    /// Phase 2: the revealed hints. Phase 1: every hint.
    pub hints: Vec<String>,
    pub status: QuestionStatus,
    /// Phase 1: hints still waiting for ratings.
    pub unrated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub correct: bool,
    pub answered_before_hints: bool,
    pub revealed_hint_count: usize,
    /// Whether another hint can be revealed now.
    pub can_reveal: bool,
    pub can_skip: bool,
}

/// Exported phase 2 result for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub annotator_id: String,
    pub session_id: String,
    pub q_id: String,
    pub status: QuestionStatus,
    pub revealed_hint_count: usize,
    pub answered_before_hints: bool,
    pub attempts: Vec<Attempt>,
}

/// Which questions each annotator gets. Annotators missing from the plan
/// get the whole dataset in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub assignments: BTreeMap<String, Vec<String>>,
}

/// Sessions over a read-only dataset. Not internally synchronized; callers
/// serialize access (the HTTP service wraps it in a mutex).
pub struct AnnotationStore {
    dataset: Arc<HashMap<String, QuestionRecord>>,
    order: Vec<String>,
    plan: AssignmentPlan,
    sessions: BTreeMap<String, Session>,
    session_order: Vec<String>,
    events: Vec<Event>,
    log: Option<EventLog>,
}

impl AnnotationStore {
    pub fn new(records: Vec<QuestionRecord>, plan: AssignmentPlan) -> PResult<Self> {
        let order: Vec<String> = records.iter().map(|r| r.q_id.clone()).collect();
        let dataset: HashMap<String, QuestionRecord> =
            records.into_iter().map(|r| (r.q_id.clone(), r)).collect();
        if dataset.len() != order.len() {
            return Err(ProtocolError::BadRequest(
                "duplicate Q_ID in dataset".into(),
            ));
        }
        for (annotator, ids) in &plan.assignments {
            if let Some(missing) = ids.iter().find(|id| !dataset.contains_key(*id)) {
                return Err(ProtocolError::BadRequest(format!(
                    "plan for {annotator} names unknown question {missing}"
                )));
            }
        }
        Ok(AnnotationStore {
            dataset: Arc::new(dataset),
            order,
            plan,
            sessions: BTreeMap::new(),
            session_order: Vec::new(),
            events: Vec::new(),
            log: None,
        })
    }

    /// Replays an existing log (if any), then appends new events to it.
    pub fn with_log(mut self, log: EventLog) -> PResult<Self> {
        for event in log
            .read_all()
            .map_err(|e| ProtocolError::Storage(e.to_string()))?
        {
            self.apply(event)?;
        }
        self.log = Some(log);
        Ok(self)
    }

    /// Applies already-validated events, as when replaying a log.
    pub fn replay(mut self, events: impl IntoIterator<Item = Event>) -> PResult<Self> {
        for e in events {
            self.apply(e)?;
        }
        Ok(self)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn session(&self, id: &str) -> PResult<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| ProtocolError::NotFound(format!("session {id}")))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.session_order.iter().map(|id| &self.sessions[id])
    }

    fn record(&self, q_id: &str) -> PResult<&QuestionRecord> {
        self.dataset
            .get(q_id)
            .ok_or_else(|| ProtocolError::NotFound(format!("question {q_id}")))
    }

    fn question(&self, session_id: &str, q_id: &str) -> PResult<(&Session, &QuestionState)> {
        let s = self.session(session_id)?;
        let q = s.question(q_id).ok_or_else(|| {
            ProtocolError::NotFound(format!("question {q_id} in session {session_id}"))
        })?;
        Ok((s, q))
    }

    fn commit(&mut self, event: Event) -> PResult<()> {
        if let Some(log) = &mut self.log {
            log.append(&event)
                .map_err(|e| ProtocolError::Storage(e.to_string()))?;
        }
        self.apply(event)
    }

    fn apply(&mut self, event: Event) -> PResult<()> {
        match &event {
            Event::SessionCreated {
                session_id,
                annotator_id,
                phase,
                questions,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Err(ProtocolError::Conflict(format!(
                        "session {session_id} exists"
                    )));
                }
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        id: session_id.clone(),
                        annotator_id: annotator_id.clone(),
                        phase: *phase,
                        questions: questions.iter().cloned().map(QuestionState::new).collect(),
                    },
                );
                self.session_order.push(session_id.clone());
            }
            Event::Attempted {
                session_id,
                q_id,
                attempt,
            } => {
                let q = self.state_mut(session_id, q_id)?;
                if attempt.correct {
                    q.status = QuestionStatus::Correct;
                }
                q.attempts.push(attempt.clone());
            }
            Event::Revealed {
                session_id,
                q_id,
                k,
            } => {
                let q = self.state_mut(session_id, q_id)?;
                if *k != q.revealed_hint_count {
                    return Err(ProtocolError::Conflict(format!(
                        "reveal of hint {k} out of order"
                    )));
                }
                q.revealed_hint_count += 1;
            }
            Event::Rated {
                session_id,
                q_id,
                hint_idx,
                ratings,
            } => {
                let q = self.state_mut(session_id, q_id)?;
                q.ratings.insert(*hint_idx, *ratings);
            }
            Event::Skipped { session_id, q_id } => {
                self.state_mut(session_id, q_id)?.status = QuestionStatus::Skipped;
            }
        }
        self.events.push(event);
        Ok(())
    }

    fn state_mut(&mut self, session_id: &str, q_id: &str) -> PResult<&mut QuestionState> {
        self.sessions
            .get_mut(session_id)
            .and_then(|s| s.question_mut(q_id))
            .ok_or_else(|| {
                ProtocolError::NotFound(format!("question {q_id} in session {session_id}"))
            })
    }

    pub fn create_session(&mut self, annotator_id: &str, phase: Phase) -> PResult<Session> {
        if annotator_id.trim().is_empty() {
            return Err(ProtocolError::BadRequest("annotator_id is empty".into()));
        }
        let questions = self
            .plan
            .assignments
            .get(annotator_id)
            .cloned()
            .unwrap_or_else(|| self.order.clone());
        let session_id = format!("s{}", self.sessions.len() + 1);
        self.commit(Event::SessionCreated {
            session_id: session_id.clone(),
            annotator_id: annotator_id.to_owned(),
            phase,
            questions,
        })?;
        Ok(self.sessions[&session_id].clone())
    }

    fn view(&self, session: &Session, q: &QuestionState) -> PResult<QuestionView> {
        let record = self.record(&q.q_id)?;
        let all: Vec<String> = record.hints.iter().map(|h| h.text.clone()).collect();
        let (hints, unrated) = match session.phase {
            Phase::AnswerWithHints => (all[..q.revealed_hint_count].to_vec(), Vec::new()),
            Phase::RateAttributes => {
                let unrated = (0..all.len())
                    .filter(|i| !q.ratings.contains_key(i))
                    .collect();
                (all.clone(), unrated)
            }
        };
        Ok(QuestionView {
            q_id: q.q_id.clone(),
            question: record.question.clone(),
            total_hints: all.len(),
            hints,
            status: q.status,
            unrated,
        })
    }

    fn finished(&self, session: &Session, q: &QuestionState) -> bool {
        match session.phase {
            Phase::AnswerWithHints => q.status != QuestionStatus::Open,
            Phase::RateAttributes => self
                .dataset
                .get(&q.q_id)
                .is_none_or(|r| q.ratings.len() >= r.hints.len()),
        }
    }

    /// The first unfinished question, or `None` when the session is done.
    pub fn next_question(&self, session_id: &str) -> PResult<Option<QuestionView>> {
        let s = self.session(session_id)?;
        match s.questions.iter().find(|q| !self.finished(s, q)) {
            Some(q) => self.view(s, q).map(Some),
            None => Ok(None),
        }
    }

    fn require_phase(session: &Session, phase: Phase) -> PResult<()> {
        if session.phase == phase {
            Ok(())
        } else {
            Err(ProtocolError::Conflict(format!(
                "session {} is in phase {:?}",
                session.id, session.phase
            )))
        }
    }

    fn outcome(&self, session_id: &str, q_id: &str) -> PResult<AttemptOutcome> {
        let (_, q) = self.question(session_id, q_id)?;
        let total = self.record(q_id)?.hints.len();
        let open = q.status == QuestionStatus::Open;
        Ok(AttemptOutcome {
            correct: q.status == QuestionStatus::Correct,
            answered_before_hints: q.answered_before_hints(),
            revealed_hint_count: q.revealed_hint_count,
            can_reveal: open && q.attempted_at_current_level() && q.revealed_hint_count < total,
            can_skip: open && q.revealed_hint_count == total,
        })
    }

    pub fn attempt(
        &mut self,
        session_id: &str,
        q_id: &str,
        answer: &str,
        at_ms: u64,
    ) -> PResult<AttemptOutcome> {
        let (s, q) = self.question(session_id, q_id)?;
        Self::require_phase(s, Phase::AnswerWithHints)?;
        if q.status != QuestionStatus::Open {
            return Err(ProtocolError::Conflict(format!(
                "question {q_id} is closed"
            )));
        }
        let correct =
            !answer.trim().is_empty() && answers_match(answer, &self.record(q_id)?.exact_answer);
        let attempt = Attempt {
            answer: answer.to_owned(),
            correct,
            hints_revealed: q.revealed_hint_count,
            at_ms,
        };
        self.commit(Event::Attempted {
            session_id: session_id.to_owned(),
            q_id: q_id.to_owned(),
            attempt,
        })?;
        self.outcome(session_id, q_id)
    }

    /// Returns hint `k`, revealing it first when it is the next one and the
    /// current level has a failed attempt.
    pub fn hint(&mut self, session_id: &str, q_id: &str, k: usize) -> PResult<String> {
        let (s, q) = self.question(session_id, q_id)?;
        let record = self.record(q_id)?;
        if k >= record.hints.len() {
            return Err(ProtocolError::NotFound(format!("hint {k} of {q_id}")));
        }
        if s.phase == Phase::RateAttributes || k < q.revealed_hint_count {
            return Ok(record.hints[k].text.clone());
        }
        if k > q.revealed_hint_count {
            return Err(ProtocolError::Conflict(format!(
                "hint {k} requested but only {} revealed",
                q.revealed_hint_count
            )));
        }
        if q.status != QuestionStatus::Open {
            return Err(ProtocolError::Conflict(format!(
                "question {q_id} is closed"
            )));
        }
        if !q.attempted_at_current_level() {
            return Err(ProtocolError::Conflict(format!(
                "attempt required before hint {k}"
            )));
        }
        let text = record.hints[k].text.clone();
        self.commit(Event::Revealed {
            session_id: session_id.to_owned(),
            q_id: q_id.to_owned(),
            k,
        })?;
        Ok(text)
    }

    /// Reveals the next hint.
    pub fn reveal(&mut self, session_id: &str, q_id: &str) -> PResult<(usize, String)> {
        let (s, q) = self.question(session_id, q_id)?;
        Self::require_phase(s, Phase::AnswerWithHints)?;
        let k = q.revealed_hint_count;
        if k >= self.record(q_id)?.hints.len() {
            return Err(ProtocolError::Conflict(format!(
                "all hints of {q_id} are revealed"
            )));
        }
        self.hint(session_id, q_id, k).map(|t| (k, t))
    }

    pub fn skip(&mut self, session_id: &str, q_id: &str) -> PResult<()> {
        let (s, q) = self.question(session_id, q_id)?;
        Self::require_phase(s, Phase::AnswerWithHints)?;
        if q.status != QuestionStatus::Open {
            return Err(ProtocolError::Conflict(format!(
                "question {q_id} is closed"
            )));
        }
        let total = self.record(q_id)?.hints.len();
        if q.revealed_hint_count < total {
            return Err(ProtocolError::Conflict(format!(
                "skip allowed only after all {total} hints are revealed"
            )));
        }
        self.commit(Event::Skipped {
            session_id: session_id.to_owned(),
            q_id: q_id.to_owned(),
        })
    }

    pub fn rate(
        &mut self,
        session_id: &str,
        q_id: &str,
        hint_idx: usize,
        ratings: HintRatings,
    ) -> PResult<()> {
        let (s, q) = self.question(session_id, q_id)?;
        Self::require_phase(s, Phase::RateAttributes)?;
        if hint_idx >= self.record(q_id)?.hints.len() {
            return Err(ProtocolError::NotFound(format!(
                "hint {hint_idx} of {q_id}"
            )));
        }
        if let Some(a) = Attribute::ALL
            .iter()
            .find(|a| !(1..=5).contains(&ratings.get(**a)))
        {
            return Err(ProtocolError::BadRequest(format!(
                "{a} rating {} outside 1..=5",
                ratings.get(*a)
            )));
        }
        if q.ratings.contains_key(&hint_idx) {
            return Err(ProtocolError::Conflict(format!(
                "hint {hint_idx} of {q_id} already rated"
            )));
        }
        self.commit(Event::Rated {
            session_id: session_id.to_owned(),
            q_id: q_id.to_owned(),
            hint_idx,
            ratings,
        })
    }

    /// Every rating, in log order, one row per attribute.
    pub fn export_ratings(&self) -> Vec<RatingRow> {
        let mut rows = Vec::new();
        for e in &self.events {
            if let Event::Rated {
                session_id,
                q_id,
                hint_idx,
                ratings,
            } = e
            {
                let annotator_id = &self.sessions[session_id].annotator_id;
                rows.extend(Attribute::ALL.iter().map(|a| RatingRow {
                    annotator_id: annotator_id.clone(),
                    q_id: q_id.clone(),
                    hint_idx: *hint_idx,
                    attribute: *a,
                    rating: ratings.get(*a),
                }));
            }
        }
        rows
    }

    /// Closed phase 2 questions, session by session.
    pub fn export_answers(&self) -> Vec<AnswerRow> {
        self.sessions()
            .filter(|s| s.phase == Phase::AnswerWithHints)
            .flat_map(|s| {
                s.questions
                    .iter()
                    .filter(|q| q.status != QuestionStatus::Open)
                    .map(move |q| AnswerRow {
                        annotator_id: s.annotator_id.clone(),
                        session_id: s.id.clone(),
                        q_id: q.q_id.clone(),
                        status: q.status,
                        revealed_hint_count: q.revealed_hint_count,
                        answered_before_hints: q.answered_before_hints(),
                        attempts: q.attempts.clone(),
                    })
            })
            .collect()
    }
}

/// Serializes rows as JSONL text.
pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}
