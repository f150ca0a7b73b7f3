//! Session management over the RAG pipeline. Every state change is
//! written to the event sink before it becomes visible.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{FairMutex, Mutex};
use ragforge_core::chunker::tokens;
use ragforge_core::embed::unique_documents;
use ragforge_core::engine::{ChatSession, Clock, EngineError, RagPipeline};
use serde::{Deserialize, Serialize};

use crate::model::{FeedbackInput, FeedbackRecord, QuestionCategory, QuestionLogEntry};
use crate::store::{validate_feedback, ApplyError, Event, EventSink, State, UsageStats};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("turn {turn} not found in session `{session_id}`")]
    TurnNotFound { session_id: String, turn: usize },
    #[error("{0}")]
    Validation(String),
    #[error("answer service unavailable: {0}")]
    Degraded(String),
    #[error("could not persist event: {0}")]
    Persistence(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<ApplyError> for ServiceError {
    fn from(e: ApplyError) -> Self {
        match e {
            ApplyError::UnknownSession(id) => ServiceError::SessionNotFound(id),
            ApplyError::UnknownTurn { session_id, turn } => {
                ServiceError::TurnNotFound { session_id, turn }
            }
            ApplyError::InvalidFeedback(m) => ServiceError::Validation(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

pub trait IdGenerator: Send + Sync {
    fn next_id(&self) -> String;
}

/// `s-000001`, `s-000002`, ...
#[derive(Debug, Default)]
pub struct SequentialIds(AtomicU64);

impl IdGenerator for SequentialIds {
    fn next_id(&self) -> String {
        format!("s-{:06}", self.0.fetch_add(1, Ordering::SeqCst) + 1)
    }
}

#[derive(Debug, Default)]
pub struct UuidIds;

impl IdGenerator for UuidIds {
    fn next_id(&self) -> String {
        uuid::Uuid::new_v4().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub answer: String,
    /// Parent documents of the retrieved chunks, best first.
    pub sources: Vec<String>,
    pub turn: usize,
}

struct Inner {
    state: State,
    sink: Box<dyn EventSink>,
}

impl Inner {
    /// Persists then applies. Nothing changes if persisting fails.
    fn commit(&mut self, event: Event) -> Result<(), ServiceError> {
        self.state.check(&event)?;
        self.sink
            .append(&event)
            .map_err(|e| ServiceError::Persistence(e.to_string()))?;
        self.state.apply(event)?;
        Ok(())
    }
}

pub struct ChatService {
    pipeline: RagPipeline,
    clock: Arc<dyn Clock>,
    ids: Box<dyn IdGenerator>,
    inner: Mutex<Inner>,
    /// Serializes turns within one session, in arrival order.
    session_locks: Mutex<HashMap<String, Arc<FairMutex<()>>>>,
}

impl ChatService {
    /// Rebuilds state from `events` and appends new events to `sink`.
    pub fn new(
        pipeline: RagPipeline,
        events: Vec<Event>,
        sink: Box<dyn EventSink>,
        ids: Box<dyn IdGenerator>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ServiceError> {
        let state = State::replay(events)
            .map_err(|(i, e)| ServiceError::Internal(format!("event {}: {e}", i + 1)))?;
        tracing::info!(
            sessions = state.sessions.len(),
            questions = state.log.len(),
            feedback = state.feedback.len(),
            "state restored"
        );
        Ok(ChatService {
            pipeline,
            clock,
            ids,
            inner: Mutex::new(Inner { state, sink }),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn pipeline(&self) -> &RagPipeline {
        &self.pipeline
    }

    fn session_lock(&self, id: &str) -> Arc<FairMutex<()>> {
        self.session_locks
            .lock()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn create_session(&self) -> Result<String, ServiceError> {
        let mut inner = self.inner.lock();
        let id = loop {
            let candidate = self.ids.next_id();
            if !inner.state.sessions.contains_key(&candidate) {
                break candidate;
            }
        };
        inner.commit(Event::SessionCreated {
            session_id: id.clone(),
            created_at_ms: self.clock.now_ms(),
        })?;
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<ChatSession, ServiceError> {
        self.inner
            .lock()
            .state
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    pub fn post_message(&self, session_id: &str, question: &str) -> Result<MessageReply, ServiceError> {
        if question.trim().is_empty() {
            return Err(ServiceError::Validation("question must not be empty".into()));
        }
        let lock = self.session_lock(session_id);
        let _guard = lock.lock();
        let session = self.session(session_id)?;

        let (turn, outcome) = self
            .pipeline
            .prepare_turn(&session, question)
            .map_err(|e| match e {
                EngineError::EmptyQuestion => ServiceError::Validation(e.to_string()),
                e if e.is_upstream() => {
                    tracing::warn!(session_id, error = %e, "upstream failure");
                    ServiceError::Degraded(e.to_string())
                }
                e => ServiceError::Internal(e.to_string()),
            })?;
        let sources = unique_documents(&outcome.retrieved);
        let index = session.turns().len();
        let entry = QuestionLogEntry {
            session_id: session_id.to_string(),
            turn: index,
            question: question.to_string(),
            category: None,
            retrieved_doc_ids: sources.clone(),
            answer_tokens: tokens(&outcome.answer).len(),
            latency_ms: turn.answered_at_ms.saturating_sub(turn.asked_at_ms),
        };
        self.inner.lock().commit(Event::TurnCompleted {
            turn,
            entry,
        })?;
        Ok(MessageReply {
            answer: outcome.answer,
            sources,
            turn: index,
        })
    }

    pub fn post_feedback(&self, session_id: &str, input: FeedbackInput) -> Result<FeedbackRecord, ServiceError> {
        let record = FeedbackRecord {
            session_id: session_id.to_string(),
            respondent_role: input.respondent_role,
            overall_rating: input.overall_rating,
            per_answer_ratings: input.per_answer_ratings,
            comment: input.comment.filter(|c| !c.trim().is_empty()),
            timestamp_ms: self.clock.now_ms(),
        };
        let mut inner = self.inner.lock();
        let turns = inner
            .state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::SessionNotFound(session_id.to_string()))?
            .turns()
            .len();
        validate_feedback(&record, turns)?;
        inner.commit(Event::Feedback {
            record: record.clone(),
        })?;
        Ok(record)
    }

    pub fn tag_question(&self, session_id: &str, turn: usize, category: QuestionCategory) -> Result<(), ServiceError> {
        self.inner.lock().commit(Event::Tagged {
            session_id: session_id.to_string(),
            turn,
            category,
        })
    }

    pub fn stats(&self) -> UsageStats {
        self.inner.lock().state.stats()
    }

    pub fn question_log(&self) -> Vec<QuestionLogEntry> {
        self.inner.lock().state.log.clone()
    }

    pub fn feedback(&self) -> Vec<FeedbackRecord> {
        self.inner.lock().state.feedback.clone()
    }
}
