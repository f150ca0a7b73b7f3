//! Prompt templates with `{question}`, `{context}` and `{chat_history}` slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::session::ChatSession;
use crate::embed::RetrievedChunk;

pub const QUESTION: &str = "question";
pub const CONTEXT: &str = "context";
pub const CHAT_HISTORY: &str = "chat_history";
const KNOWN: [&str; 3] = [QUESTION, CONTEXT, CHAT_HISTORY];

/// Answering prompt used by the original deployment.
pub const CUSTOM_PROMPT: &str = "Sei unipa-gpt, il chatbot e assistente virtuale dell'Università degli Studi di Palermo.
Rispondi cordialmente e in forma colloquiale alle domande che ti vengono poste.
Se ricevi un saluto, rispondi salutando e presentandoti.
Se ricevi una domanda riguardante l'università degli studi di Palermo,
rispondi in base ai documenti che ti vengono dati insieme alla domanda.
Se non sai rispondere, scusati e suggerisci di consultare il sito web, non inventare risposte.
Question: {question}
Documenti: {context}";

/// Revised answering prompt used at the public demo event.
pub const SHARPER_CUSTOM_PROMPT: &str = "Sono Unipa-GPT, chatbot e assistente virtuale dell'Università degli Studi di Palermo
che risponde cordialmente e in forma colloquiale.
Ai saluti, rispondi salutando e presentandoti;
Rispondi alla domanda con la dicitura \"Risposta: \"
Ricordati che il rettore dell'Università è il professore Massimo Midiri.
Se la domanda riguarda l'università degli studi di Palermo,
rispondi in base alle informazioni e riporta i link ad esse associate;
Se non sai rispondere alla domanda, rispondi dicendo che sei un'intelligenza artificiale
che ha ancora molto da imparare e suggerisci
di andare su https://www.unipa.it/, non inventare risposte.
Domanda: {question}
Informazioni: {context}";

/// Rewrites history plus follow-up into a standalone question.
pub const CONDENSE_PROMPT: &str = "Data la seguente conversazione e la domanda successiva, riformula la domanda successiva
in modo tale sia una domanda singola.
Conversazione: {chat_history}
Domanda succesiva: {question}
Domanda singola:";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("{kind:?} template must contain {{{placeholder}}}")]
    MissingPlaceholder {
        kind: TemplateKind,
        placeholder: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateKind {
    Custom,
    Condense,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

/// Splits a body into literal text and `{identifier}` slots. Braces that do
/// not enclose an identifier are literal.
fn parse(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;
    let bytes = body.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_lowercase() || **b == b'_')
                .count();
            let close = i + 1 + name_len;
            if name_len > 0 && bytes.get(close) == Some(&b'}') {
                if literal_start < i {
                    pieces.push(Piece::Text(&body[literal_start..i]));
                }
                pieces.push(Piece::Slot(&body[i + 1..close]));
                i = close + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < body.len() {
        pieces.push(Piece::Text(&body[literal_start..]));
    }
    pieces
}

/// Values for template slots.
#[derive(Debug, Clone, Default)]
pub struct Bindings<'a> {
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &'a str, value: &'a str) -> Self {
        self.values.insert(name, value);
        self
    }

    pub fn question(self, value: &'a str) -> Self {
        self.set(QUESTION, value)
    }

    pub fn context(self, value: &'a str) -> Self {
        self.set(CONTEXT, value)
    }

    pub fn chat_history(self, value: &'a str) -> Self {
        self.set(CHAT_HISTORY, value)
    }
}

/// Substitutes every slot in one pass; substituted values are never
/// rescanned.
pub fn render(body: &str, bindings: &Bindings<'_>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len());
    for piece in parse(body) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => out.push_str(
                bindings
                    .values
                    .get(name)
                    .ok_or_else(|| PromptError::MissingBinding(name.to_string()))?,
            ),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    kind: TemplateKind,
    body: String,
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let slots: Vec<&str> = parse(&body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect();
        if let Some(unknown) = slots.iter().find(|s| !KNOWN.contains(s)) {
            return Err(PromptError::UnknownPlaceholder(unknown.to_string()));
        }
        let required: &[&'static str] = match kind {
            TemplateKind::Custom => &[QUESTION, CONTEXT],
            TemplateKind::Condense => &[CHAT_HISTORY, QUESTION],
        };
        for &placeholder in required {
            if !slots.contains(&placeholder) {
                return Err(PromptError::MissingPlaceholder { kind, placeholder });
            }
        }
        Ok(PromptTemplate { kind, body })
    }

    pub fn custom() -> Self {
        Self::new(TemplateKind::Custom, CUSTOM_PROMPT).expect("built-in template")
    }

    pub fn sharper_custom() -> Self {
        Self::new(TemplateKind::Custom, SHARPER_CUSTOM_PROMPT).expect("built-in template")
    }

    pub fn condense() -> Self {
        Self::new(TemplateKind::Condense, CONDENSE_PROMPT).expect("built-in template")
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn render(&self, bindings: &Bindings<'_>) -> Result<String, PromptError> {
        render(&self.body, bindings)
    }
}

/// Retrieved chunk texts in rank order, separated by a blank line.
pub fn join_context(chunks: &[RetrievedChunk]) -> String {
    chunks
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// `Utente: ...` / `Assistente: ...` line pairs, one pair per turn.
pub fn serialize_history(session: &ChatSession) -> String {
    session
        .turns()
        .iter()
        .map(|t| format!("Utente: {}\nAssistente: {}", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}
