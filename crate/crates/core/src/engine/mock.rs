//! Scripted LLM provider for offline tests and demos.

use std::sync::Mutex;

use super::provider::{truncate_tokens, GenerationParams, LlmProvider, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Any,
    Contains(String),
    Prefix(String),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::Prefix(s) => prompt.starts_with(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Text(String),
    Fail(String),
    /// Everything after the last occurrence of the marker (or the whole
    /// prompt if the marker is absent).
    EchoAfter(String),
}

#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub reply: Reply,
    /// Sticky entries answer every matching call instead of being consumed.
    pub sticky: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub order: usize,
    pub prompt: String,
    pub params: GenerationParams,
    pub result: Result<String, ProviderError>,
}

/// Each call consumes the first matching script entry. A call no entry
/// matches fails with [`ProviderError::ScriptGap`]; a call after every entry
/// was consumed fails with [`ProviderError::ScriptExhausted`]. Every call is
/// logged. Responses are capped to `max_new_tokens` whitespace tokens.
#[derive(Debug)]
pub struct MockProvider {
    name: String,
    script: Mutex<Vec<ScriptEntry>>,
    calls: Mutex<Vec<CallRecord>>,
}

#[derive(Debug, Default)]
pub struct MockBuilder {
    name: Option<String>,
    entries: Vec<ScriptEntry>,
}

impl MockBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn push(mut self, matcher: Matcher, reply: Reply, sticky: bool) -> Self {
        self.entries.push(ScriptEntry {
            matcher,
            reply,
            sticky,
        });
        self
    }

    pub fn respond(self, matcher: Matcher, text: impl Into<String>) -> Self {
        self.push(matcher, Reply::Text(text.into()), false)
    }

    pub fn always(self, matcher: Matcher, text: impl Into<String>) -> Self {
        self.push(matcher, Reply::Text(text.into()), true)
    }

    pub fn fail(self, matcher: Matcher, message: impl Into<String>) -> Self {
        self.push(matcher, Reply::Fail(message.into()), false)
    }

    pub fn always_fail(self, matcher: Matcher, message: impl Into<String>) -> Self {
        self.push(matcher, Reply::Fail(message.into()), true)
    }

    pub fn always_echo_after(self, matcher: Matcher, marker: impl Into<String>) -> Self {
        self.push(matcher, Reply::EchoAfter(marker.into()), true)
    }

    pub fn entry(mut self, entry: ScriptEntry) -> Self {
        self.entries.push(entry);
        self
    }

    /// # Panics
    /// If no entry was added.
    pub fn build(self) -> MockProvider {
        assert!(!self.entries.is_empty(), "mock script must not be empty");
        MockProvider {
            name: self.name.unwrap_or_else(|| "mock".into()),
            script: Mutex::new(self.entries),
            calls: Mutex::new(Vec::new()),
        }
    }
}

impl MockProvider {
    pub fn builder() -> MockBuilder {
        MockBuilder::default()
    }

    /// A provider that answers `text` to every call.
    pub fn constant(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self::builder().name(name).always(Matcher::Any, text).build()
    }

    /// A provider that echoes whatever follows `marker` in the prompt.
    pub fn echo_after(marker: impl Into<String>) -> Self {
        Self::builder()
            .name("echo")
            .always_echo_after(Matcher::Any, marker)
            .build()
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.calls.lock().unwrap().iter().map(|c| c.prompt.clone()).collect()
    }

    fn next_reply(&self, prompt: &str) -> Result<Reply, ProviderError> {
        let mut script = self.script.lock().unwrap();
        if script.is_empty() {
            return Err(ProviderError::ScriptExhausted);
        }
        let pos = script
            .iter()
            .position(|e| e.matcher.matches(prompt))
            .ok_or_else(|| ProviderError::ScriptGap(prompt.chars().take(60).collect()))?;
        Ok(if script[pos].sticky {
            script[pos].reply.clone()
        } else {
            script.remove(pos).reply
        })
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        let result = self.next_reply(prompt).and_then(|reply| match reply {
            Reply::Text(t) => Ok(t),
            Reply::Fail(m) => Err(ProviderError::Scripted(m)),
            Reply::EchoAfter(marker) => Ok(match prompt.rfind(marker.as_str()) {
                Some(i) => prompt[i + marker.len()..].to_string(),
                None => prompt.to_string(),
            }),
        });
        let result = result.map(|t| match params.max_new_tokens {
            Some(n) => truncate_tokens(&t, n as usize).to_string(),
            None => t,
        });
        let mut calls = self.calls.lock().unwrap();
        let order = calls.len();
        calls.push(CallRecord {
            order,
            prompt: prompt.to_string(),
            params: *params,
            result: result.clone(),
        });
        result
    }
}
