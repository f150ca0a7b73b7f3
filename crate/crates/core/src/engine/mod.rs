//! The conversational RAG pipeline and the provider interfaces it talks to.

mod mock;
mod pipeline;
pub mod prompt;
mod provider;
mod session;

pub use mock::{CallRecord, Matcher, MockBuilder, MockProvider, Reply, ScriptEntry};
pub use pipeline::{
    condense, AnswerOutcome, EngineError, GenerationConfig, PromptProfile, RagPipeline, Stage,
    DEFAULT_K,
};
pub use prompt::{Bindings, PromptError, PromptTemplate, TemplateKind};
pub use provider::{truncate_tokens, GenerationParams, LlmProvider, ProviderError};
pub use session::{ChatSession, Clock, StepClock, SystemClock, Turn};
