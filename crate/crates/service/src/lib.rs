//! Chat service: sessions, answers from the RAG pipeline, feedback, manual
//! question tagging and usage statistics, persisted to an append-only event
//! log and exposed over HTTP.

pub mod config;
pub mod http;
pub mod model;
pub mod providers;
pub mod service;
pub mod store;

pub use config::{ConfigError, ServiceConfig};
pub use http::{router, serve, ApiError};
pub use model::{
    AnswerRating, FeedbackInput, FeedbackRecord, QuestionCategory, QuestionLogEntry,
    RespondentRole,
};
pub use service::{ChatService, IdGenerator, MessageReply, SequentialIds, ServiceError, UuidIds};
pub use store::{Event, EventSink, FileSink, NullSink, State, UsageStats};
