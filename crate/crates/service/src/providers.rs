//! Provider selection from short textual specs, plus the offline
//! extractive model used for demos and tests.
//!
//! LLM specs: `extractive`, `script:PATH`, `remote:MODEL`.
//! Embedder specs: `local`, `remote`.

use std::path::Path;
use std::sync::Arc;

use ragforge_core::chunker::tokens;
use ragforge_core::embed::{EmbeddingProvider, HashingEmbedder, DEFAULT_DIM};
use ragforge_core::engine::{
    truncate_tokens, GenerationParams, LlmProvider, Matcher, MockProvider, ProviderError, Reply,
    ScriptEntry,
};
use ragforge_core::eval::split_sentences;
use ragforge_core::remote::{Endpoint, RemoteEmbedder, RemoteLlm};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ProviderSpecError {
    #[error("unknown provider spec `{0}` (expected extractive, script:PATH or remote:MODEL)")]
    UnknownLlm(String),
    #[error("unknown embedder `{0}` (expected local or remote)")]
    UnknownEmbedder(String),
    #[error("script {path}: {reason}")]
    Script { path: String, reason: String },
    #[error("{0}")]
    Remote(String),
}

const CONDENSE_MARKER: &str = "Domanda singola:";
const FOLLOW_UP_LABEL: &str = "Domanda succesiva:";
const CONTEXT_LABELS: [&str; 2] = ["Documenti:", "Informazioni:"];
const NO_CONTEXT_ANSWER: &str =
    "Mi dispiace, non ho trovato informazioni utili. Ti consiglio di consultare il sito web dell'ateneo.";

/// Deterministic stand-in for a chat model. Condensation prompts get the
/// follow-up question back unchanged; answer prompts get the first two
/// sentences of the supplied context.
#[derive(Debug, Clone)]
pub struct ExtractiveLlm {
    name: String,
}

impl Default for ExtractiveLlm {
    fn default() -> Self {
        ExtractiveLlm {
            name: "extractive".into(),
        }
    }
}

impl ExtractiveLlm {
    fn respond(prompt: &str) -> String {
        if let Some(end) = prompt.rfind(CONDENSE_MARKER) {
            let head = &prompt[..end];
            if let Some(start) = head.rfind(FOLLOW_UP_LABEL) {
                return head[start + FOLLOW_UP_LABEL.len()..].trim().to_string();
            }
        }
        let context = CONTEXT_LABELS
            .iter()
            .filter_map(|l| prompt.rfind(l).map(|i| &prompt[i + l.len()..]))
            .min_by_key(|rest| rest.len())
            .unwrap_or("");
        let sentences = split_sentences(context);
        if sentences.is_empty() {
            return NO_CONTEXT_ANSWER.to_string();
        }
        sentences.into_iter().take(2).collect::<Vec<_>>().join(" ")
    }
}

impl LlmProvider for ExtractiveLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        let out = Self::respond(prompt);
        Ok(match params.max_new_tokens {
            Some(max) if tokens(&out).len() > max as usize => truncate_tokens(&out, max as usize).to_string(),
            _ => out,
        })
    }
}

/// One line of a mock script file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    contains: Option<String>,
    prefix: Option<String>,
    reply: Option<String>,
    fail: Option<String>,
    echo_after: Option<String>,
    #[serde(default)]
    sticky: bool,
}

/// Loads a line-delimited mock script. Each line holds at most one of
/// `contains` / `prefix`, exactly one of `reply` / `fail` / `echo_after`,
/// and an optional `sticky` flag.
pub fn load_script(path: &Path) -> Result<MockProvider, ProviderSpecError> {
    let err = |reason: String| ProviderSpecError::Script {
        path: path.display().to_string(),
        reason,
    };
    let lines: Vec<ScriptLine> = ragforge_core::io::read_jsonl(path).map_err(|e| err(e.to_string()))?;
    if lines.is_empty() {
        return Err(err("script is empty".into()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "script".into());
    let mut builder = MockProvider::builder().name(name);
    for (i, l) in lines.into_iter().enumerate() {
        let matcher = match (l.contains, l.prefix) {
            (None, None) => Matcher::Any,
            (Some(c), None) => Matcher::Contains(c),
            (None, Some(p)) => Matcher::Prefix(p),
            (Some(_), Some(_)) => return Err(err(format!("line {}: both contains and prefix", i + 1))),
        };
        let reply = match (l.reply, l.fail, l.echo_after) {
            (Some(t), None, None) => Reply::Text(t),
            (None, Some(f), None) => Reply::Fail(f),
            (None, None, Some(m)) => Reply::EchoAfter(m),
            _ => {
                return Err(err(format!(
                    "line {}: exactly one of reply, fail, echo_after is required",
                    i + 1
                )))
            }
        };
        builder = builder.entry(ScriptEntry {
            matcher,
            reply,
            sticky: l.sticky,
        });
    }
    Ok(builder.build())
}

pub fn llm_from_spec(spec: &str) -> Result<Arc<dyn LlmProvider>, ProviderSpecError> {
    let spec = spec.trim();
    if spec == "extractive" {
        return Ok(Arc::new(ExtractiveLlm::default()));
    }
    if let Some(path) = spec.strip_prefix("script:") {
        return Ok(Arc::new(load_script(Path::new(path))?));
    }
    if let Some(model) = spec.strip_prefix("remote:").filter(|m| !m.is_empty()) {
        let endpoint = Endpoint::llm_from_env(model).map_err(|e| ProviderSpecError::Remote(e.to_string()))?;
        return Ok(Arc::new(RemoteLlm::new(endpoint)));
    }
    Err(ProviderSpecError::UnknownLlm(spec.to_string()))
}

/// `dim` applies to the local embedder; the remote one reads its
/// dimension from the environment.
pub fn embedder_from_spec(spec: &str, dim: Option<usize>) -> Result<Arc<dyn EmbeddingProvider>, ProviderSpecError> {
    match spec.trim() {
        "local" => {
            let dim = dim.unwrap_or(DEFAULT_DIM);
            if dim == 0 {
                return Err(ProviderSpecError::UnknownEmbedder("local with dim 0".into()));
            }
            Ok(Arc::new(HashingEmbedder::new(dim)))
        }
        "remote" => {
            let (endpoint, env_dim) =
                Endpoint::embed_from_env().map_err(|e| ProviderSpecError::Remote(e.to_string()))?;
            Ok(Arc::new(RemoteEmbedder::new(endpoint, dim.unwrap_or(env_dim))))
        }
        other => Err(ProviderSpecError::UnknownEmbedder(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ragforge_core::engine::prompt::{CONDENSE_PROMPT, CUSTOM_PROMPT, SHARPER_CUSTOM_PROMPT};
    use ragforge_core::engine::{Bindings, PromptTemplate, TemplateKind};

    fn gen(prompt: &str) -> String {
        ExtractiveLlm::default()
            .generate(prompt, &GenerationParams::default())
            .unwrap()
    }

    #[test]
    fn extractive_condense_returns_follow_up() {
        let t = PromptTemplate::new(TemplateKind::Condense, CONDENSE_PROMPT).unwrap();
        let p = t
            .render(&Bindings::new().chat_history("Utente: a\nAssistente: b").question("E le tasse?"))
            .unwrap();
        assert_eq!(gen(&p), "E le tasse?");
    }

    #[test]
    fn extractive_answer_uses_context() {
        for body in [CUSTOM_PROMPT, SHARPER_CUSTOM_PROMPT] {
            let t = PromptTemplate::new(TemplateKind::Custom, body).unwrap();
            let p = t
                .render(&Bindings::new().question("q").context("Uno. Due! Tre."))
                .unwrap();
            assert_eq!(gen(&p), "Uno. Due!");
            let empty = t.render(&Bindings::new().question("q").context("")).unwrap();
            assert_eq!(gen(&empty), NO_CONTEXT_ANSWER);
        }
    }

    #[test]
    fn extractive_respects_token_cap() {
        let p = PromptTemplate::custom()
            .render(&Bindings::new().question("q").context("a b c d e f."))
            .unwrap();
        let out = ExtractiveLlm::default()
            .generate(&p, &GenerationParams { temperature: 0.0, max_new_tokens: Some(3) })
            .unwrap();
        assert_eq!(out, "a b c");
    }

    #[test]
    fn script_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bot.jsonl");
        std::fs::write(
            &path,
            "{\"contains\":\"Domanda singola\",\"reply\":\"riformulata\",\"sticky\":true}\n{\"reply\":\"ciao\"}\n{\"fail\":\"giù\"}\n",
        )
        .unwrap();
        let mock = load_script(&path).unwrap();
        let p = GenerationParams::default();
        assert_eq!(mock.name(), "bot");
        assert_eq!(mock.generate("x Domanda singola:", &p).unwrap(), "riformulata");
        assert_eq!(mock.generate("x", &p).unwrap(), "ciao");
        assert!(mock.generate("x", &p).is_err());
        assert_eq!(mock.generate("Domanda singola", &p).unwrap(), "riformulata");

        std::fs::write(&path, "{\"reply\":\"a\",\"fail\":\"b\"}\n").unwrap();
        assert!(matches!(load_script(&path), Err(ProviderSpecError::Script { .. })));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(llm_from_spec("extractive").unwrap().name(), "extractive");
        assert!(matches!(llm_from_spec("gpt"), Err(ProviderSpecError::UnknownLlm(_))));
        assert_eq!(embedder_from_spec("local", Some(64)).unwrap().dim(), 64);
        assert!(embedder_from_spec("bogus", None).is_err());
    }
}
