//! Append-only event log and the in-memory state rebuilt from it.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ragforge_core::engine::{ChatSession, Turn};
use serde::{Deserialize, Serialize};

use crate::model::{
    AnswerRating, FeedbackRecord, QuestionCategory, QuestionLogEntry, RespondentRole, MAX_RATING,
    MIN_RATING,
};

pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        created_at_ms: u64,
    },
    TurnCompleted {
        turn: Turn,
        entry: QuestionLogEntry,
    },
    Feedback {
        record: FeedbackRecord,
    },
    Tagged {
        session_id: String,
        turn: usize,
        category: QuestionCategory,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Destination for events. `append` must either persist the whole record
/// or fail without leaving a partial one behind.
pub trait EventSink: Send {
    fn append(&mut self, event: &Event) -> io::Result<()>;
}

/// Discards events; for state that needs no durability.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _event: &Event) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON record per line, synced after every append.
#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    file: File,
    len: u64,
    sync: bool,
}

impl FileSink {
    pub fn open(path: &Path, sync: bool) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        let len = file.metadata().map_err(io_err)?.len();
        Ok(FileSink {
            path: path.to_path_buf(),
            file,
            len,
            sync,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for FileSink {
    fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        let result = self.file.write_all(&line).and_then(|_| {
            if self.sync {
                self.file.sync_data()
            } else {
                self.file.flush()
            }
        });
        match result {
            Ok(()) => {
                self.len += line.len() as u64;
                Ok(())
            }
            Err(e) => {
                let _ = self.file.set_len(self.len);
                Err(e)
            }
        }
    }
}

/// Reads every complete event. An unterminated, unparseable final line is
/// a torn write from a crash: it is dropped and the file truncated to the
/// last complete record. Any other bad line is an error.
pub fn load_events(path: &Path) -> Result<Vec<Event>, StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let tail = &bytes[complete..];
    let mut events = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let event = serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    if !tail.is_empty() {
        match serde_json::from_slice::<Event>(tail) {
            Ok(event) => {
                events.push(event);
                let mut f = OpenOptions::new().append(true).open(path).map_err(io_err)?;
                f.write_all(b"\n").map_err(io_err)?;
            }
            Err(_) => {
                tracing::warn!(path = %path.display(), bytes = tail.len(), "dropping torn record at end of event log");
                let f = OpenOptions::new().write(true).open(path).map_err(io_err)?;
                f.set_len(complete as u64).map_err(io_err)?;
            }
        }
    }
    Ok(events)
}

/// Why an event cannot be applied to the current state.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("session `{0}` already exists")]
    DuplicateSession(String),
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("turn {turn} of session `{session_id}` not found")]
    UnknownTurn { session_id: String, turn: usize },
    #[error("turn {got} appended to session `{session_id}` out of order (expected {expected})")]
    TurnOrder {
        session_id: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct State {
    pub sessions: BTreeMap<String, ChatSession>,
    pub session_order: Vec<String>,
    pub log: Vec<QuestionLogEntry>,
    /// (session, turn) → position in `log`.
    pub log_index: HashMap<(String, usize), usize>,
    pub feedback: Vec<FeedbackRecord>,
}

pub fn validate_feedback(record: &FeedbackRecord, turns: usize) -> Result<(), ApplyError> {
    if !(MIN_RATING..=MAX_RATING).contains(&record.overall_rating) {
        return Err(ApplyError::InvalidFeedback(format!(
            "overall_rating must be between {MIN_RATING} and {MAX_RATING}, got {}",
            record.overall_rating
        )));
    }
    if record.per_answer_ratings.len() > turns {
        return Err(ApplyError::InvalidFeedback(format!(
            "{} answer ratings for {turns} turns",
            record.per_answer_ratings.len()
        )));
    }
    Ok(())
}

impl State {
    /// Checks `event` against the state without changing it.
    pub fn check(&self, event: &Event) -> Result<(), ApplyError> {
        match event {
            Event::SessionCreated { session_id, .. } => {
                if self.sessions.contains_key(session_id) {
                    return Err(ApplyError::DuplicateSession(session_id.clone()));
                }
            }
            Event::TurnCompleted { entry, .. } => {
                let session = self
                    .sessions
                    .get(&entry.session_id)
                    .ok_or_else(|| ApplyError::UnknownSession(entry.session_id.clone()))?;
                if entry.turn != session.turns().len() {
                    return Err(ApplyError::TurnOrder {
                        session_id: entry.session_id.clone(),
                        expected: session.turns().len(),
                        got: entry.turn,
                    });
                }
            }
            Event::Feedback { record } => {
                let session = self
                    .sessions
                    .get(&record.session_id)
                    .ok_or_else(|| ApplyError::UnknownSession(record.session_id.clone()))?;
                validate_feedback(record, session.turns().len())?;
            }
            Event::Tagged {
                session_id, turn, ..
            } => {
                if !self.sessions.contains_key(session_id) {
                    return Err(ApplyError::UnknownSession(session_id.clone()));
                }
                if !self.log_index.contains_key(&(session_id.clone(), *turn)) {
                    return Err(ApplyError::UnknownTurn {
                        session_id: session_id.clone(),
                        turn: *turn,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: Event) -> Result<(), ApplyError> {
        self.check(&event)?;
        match event {
            Event::SessionCreated { session_id, .. } => {
                self.session_order.push(session_id.clone());
                self.sessions
                    .insert(session_id.clone(), ChatSession::new(session_id));
            }
            Event::TurnCompleted { turn, entry } => {
                self.sessions
                    .get_mut(&entry.session_id)
                    .expect("checked")
                    .push_turn(turn);
                self.log_index
                    .insert((entry.session_id.clone(), entry.turn), self.log.len());
                self.log.push(entry);
            }
            Event::Feedback { record } => self.feedback.push(record),
            Event::Tagged {
                session_id,
                turn,
                category,
            } => {
                let pos = self.log_index[&(session_id, turn)];
                self.log[pos].category = Some(category);
            }
        }
        Ok(())
    }

    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self, (usize, ApplyError)> {
        let mut state = State::default();
        for (i, e) in events.into_iter().enumerate() {
            state.apply(e).map_err(|err| (i, err))?;
        }
        Ok(state)
    }

    pub fn stats(&self) -> UsageStats {
        let mut stats = UsageStats {
            sessions: self.sessions.len(),
            total_questions: self.log.len(),
            categories: QuestionCategory::ALL.iter().map(|&c| (c, 0)).collect(),
            untagged: 0,
            feedback_count: self.feedback.len(),
            overall_ratings: (MIN_RATING..=MAX_RATING).map(|r| (r, 0)).collect(),
            respondent_roles: RespondentRole::ALL.iter().map(|&r| (r, 0)).collect(),
            answer_ratings: AnswerRating::ALL.iter().map(|&r| (r, 0)).collect(),
        };
        for entry in &self.log {
            match entry.category {
                Some(c) => *stats.categories.get_mut(&c).expect("all categories present") += 1,
                None => stats.untagged += 1,
            }
        }
        for f in &self.feedback {
            *stats.overall_ratings.entry(f.overall_rating).or_default() += 1;
            *stats.respondent_roles.entry(f.respondent_role).or_default() += 1;
            for r in &f.per_answer_ratings {
                *stats.answer_ratings.entry(*r).or_default() += 1;
            }
        }
        stats
    }
}

/// Usage report. Category counts plus `untagged` always equal
/// `total_questions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStats {
    pub sessions: usize,
    pub total_questions: usize,
    pub categories: BTreeMap<QuestionCategory, usize>,
    pub untagged: usize,
    pub feedback_count: usize,
    pub overall_ratings: BTreeMap<u8, usize>,
    pub respondent_roles: BTreeMap<RespondentRole, usize>,
    pub answer_ratings: BTreeMap<AnswerRating, usize>,
}

impl UsageStats {
    pub fn histogram_total(&self) -> usize {
        self.categories.values().sum::<usize>() + self.untagged
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "sessions: {}\nquestions: {}\n\ncategories\n",
            self.sessions, self.total_questions
        );
        let bar = |n: usize, total: usize| {
            let width = (n * 40).checked_div(total).unwrap_or(0);
            if width == 0 {
                String::new()
            } else {
                format!(" {}", "#".repeat(width))
            }
        };
        for (c, n) in &self.categories {
            out.push_str(&format!("  {:<24} {:>5}{}\n", c.as_str(), n, bar(*n, self.total_questions)));
        }
        out.push_str(&format!("  {:<24} {:>5}{}\n", "(untagged)", self.untagged, bar(self.untagged, self.total_questions)));
        out.push_str(&format!("\nfeedback: {}\n  overall rating\n", self.feedback_count));
        for (r, n) in &self.overall_ratings {
            out.push_str(&format!("    {r} {n:>5}{}\n", bar(*n, self.feedback_count)));
        }
        out.push_str("  respondents\n");
        for (r, n) in &self.respondent_roles {
            out.push_str(&format!("    {:<24} {:>5}\n", format!("{r:?}"), n));
        }
        out.push_str("  answer ratings\n");
        for (r, n) in &self.answer_ratings {
            out.push_str(&format!("    {:<24} {:>5}\n", format!("{r:?}"), n));
        }
        out
    }
}

/// Replays an event log file into state, reporting the failing line.
pub fn state_from_file(path: &Path) -> Result<State, StoreError> {
    let events = load_events(path)?;
    State::replay(events).map_err(|(i, e)| StoreError::Corrupt {
        path: path.to_path_buf(),
        line: i + 1,
        reason: e.to_string(),
    })
}
