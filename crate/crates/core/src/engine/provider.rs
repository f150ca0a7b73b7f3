use serde::{Deserialize, Serialize};

/// Sampling settings passed with every generation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_new_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("no script entry matches prompt starting with {0:?}")]
    ScriptGap(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError>;
}

/// Keeps at most `max_tokens` whitespace tokens of `text`, preserving the
/// original spacing between the kept tokens.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let spans = crate::chunker::tokenize(text);
    if spans.len() <= max_tokens {
        return text;
    }
    if max_tokens == 0 {
        return "";
    }
    &text[..spans[max_tokens - 1].end]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_keeps_prefix() {
        assert_eq!(truncate_tokens("a b  c d", 3), "a b  c");
        assert_eq!(truncate_tokens("a b", 5), "a b");
        assert_eq!(truncate_tokens("a b", 0), "");
    }
}
