//! Condense, retrieve, prompt, generate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prompt::{join_context, serialize_history, Bindings, PromptError, PromptTemplate};
use super::provider::{GenerationParams, LlmProvider, ProviderError};
use super::session::{ChatSession, Clock, SystemClock, Turn};
use crate::embed::{RetrievalError, RetrievedChunk, Retriever};

pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PromptProfile {
    /// History is inlined into the answering prompt as-is.
    #[serde(rename = "custom")]
    CustomOnly,
    /// History and follow-up are first rewritten into a standalone question.
    #[default]
    #[serde(rename = "condensed")]
    Condensed,
}

impl std::str::FromStr for PromptProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "custom" => Ok(PromptProfile::CustomOnly),
            "condensed" => Ok(PromptProfile::Condensed),
            other => Err(format!("unknown prompt profile `{other}` (expected custom or condensed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_new_tokens: Option<u32>,
    pub prompt_profile: PromptProfile,
    /// Use the revised answering prompt instead of the original one.
    pub sharper_profile: bool,
    pub k: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 0.0,
            max_new_tokens: None,
            prompt_profile: PromptProfile::Condensed,
            sharper_profile: false,
            k: DEFAULT_K,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(EngineError::Config(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == Some(0) {
            return Err(EngineError::Config("max_new_tokens must be positive".into()));
        }
        if self.k == 0 {
            return Err(EngineError::Config("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
        }
    }

    pub fn custom_template(&self) -> PromptTemplate {
        if self.sharper_profile {
            PromptTemplate::sharper_custom()
        } else {
            PromptTemplate::custom()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Condense,
    Answer,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("session {session_id}: provider failed during {stage:?}: {source}")]
    Provider {
        session_id: String,
        stage: Stage,
        #[source]
        source: ProviderError,
    },
    #[error("session {session_id}: retrieval failed: {source}")]
    Retrieval {
        session_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid generation config: {0}")]
    Config(String),
}

impl EngineError {
    /// True for failures of an upstream model or retrieval backend.
    pub fn is_upstream(&self) -> bool {
        matches!(self, EngineError::Provider { .. } | EngineError::Retrieval { .. })
    }
}

/// Rewrites `question` into a standalone question given the session history.
/// With an empty history the question is returned verbatim and the provider
/// is not called.
pub fn condense(
    history: &ChatSession,
    question: &str,
    llm: &dyn LlmProvider,
    template: &PromptTemplate,
    params: &GenerationParams,
) -> Result<String, EngineError> {
    if question.trim().is_empty() {
        return Err(EngineError::EmptyQuestion);
    }
    if history.is_empty() {
        return Ok(question.to_string());
    }
    let history_text = serialize_history(history);
    let prompt = template.render(&Bindings::new().chat_history(&history_text).question(question))?;
    llm.generate(&prompt, params)
        .map(|s| s.trim().to_string())
        .map_err(|source| EngineError::Provider {
            session_id: history.id().to_string(),
            stage: Stage::Condense,
            source,
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerOutcome {
    pub answer: String,
    pub retrieved: Vec<RetrievedChunk>,
    pub standalone_question: Option<String>,
    pub provider_calls: usize,
}

pub struct RagPipeline {
    retriever: Arc<dyn Retriever>,
    llm: Arc<dyn LlmProvider>,
    config: GenerationConfig,
    custom: PromptTemplate,
    condense: PromptTemplate,
    clock: Arc<dyn Clock>,
}

impl RagPipeline {
    pub fn new(
        retriever: Arc<dyn Retriever>,
        llm: Arc<dyn LlmProvider>,
        config: GenerationConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(RagPipeline {
            custom: config.custom_template(),
            condense: PromptTemplate::condense(),
            retriever,
            llm,
            config,
            clock: Arc::new(SystemClock),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_custom_template(mut self, template: PromptTemplate) -> Self {
        self.custom = template;
        self
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn llm(&self) -> &dyn LlmProvider {
        self.llm.as_ref()
    }

    /// Answers `question` in the context of `session` and appends the turn.
    /// On error the session is left untouched.
    pub fn answer(&self, session: &mut ChatSession, question: &str) -> Result<AnswerOutcome, EngineError> {
        let turn = self.prepare_turn(session, question)?;
        let outcome = turn.1;
        session.push_turn(turn.0);
        Ok(outcome)
    }

    /// Runs the pipeline without mutating `session`, returning the turn that
    /// should be appended together with the outcome.
    pub fn prepare_turn(&self, session: &ChatSession, question: &str) -> Result<(Turn, AnswerOutcome), EngineError> {
        if question.trim().is_empty() {
            return Err(EngineError::EmptyQuestion);
        }
        let asked_at_ms = self.clock.now_ms();
        let params = self.config.params();
        let mut calls = 0;

        let (retrieval_query, standalone, question_slot) = match self.config.prompt_profile {
            PromptProfile::Condensed => {
                let standalone = condense(session, question, self.llm.as_ref(), &self.condense, &params)?;
                let condensed = !session.is_empty();
                if condensed {
                    calls += 1;
                }
                (
                    standalone.clone(),
                    condensed.then(|| standalone.clone()),
                    standalone,
                )
            }
            PromptProfile::CustomOnly => {
                let slot = if session.is_empty() {
                    question.to_string()
                } else {
                    format!("{}\nUtente: {}", serialize_history(session), question)
                };
                (question.to_string(), None, slot)
            }
        };

        let retrieved = self
            .retriever
            .retrieve(&retrieval_query, self.config.k)
            .map_err(|source| EngineError::Retrieval {
                session_id: session.id().to_string(),
                source,
            })?;
        if retrieved.is_empty() {
            tracing::warn!(session_id = session.id(), "retrieval returned no context");
        }
        let context = join_context(&retrieved);
        let prompt = self
            .custom
            .render(&Bindings::new().question(&question_slot).context(&context))?;
        let answer = self
            .llm
            .generate(&prompt, &params)
            .map_err(|source| EngineError::Provider {
                session_id: session.id().to_string(),
                stage: Stage::Answer,
                source,
            })?;
        calls += 1;

        let turn = Turn {
            question: question.to_string(),
            answer: answer.clone(),
            standalone_question: standalone.clone(),
            retrieved: retrieved.iter().map(|c| c.chunk_ref.clone()).collect(),
            asked_at_ms,
            answered_at_ms: self.clock.now_ms(),
        };
        Ok((
            turn,
            AnswerOutcome {
                answer,
                retrieved,
                standalone_question: standalone,
                provider_calls: calls,
            },
        ))
    }
}
