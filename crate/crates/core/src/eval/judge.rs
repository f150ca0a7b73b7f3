//! Judges perform the sentence selection, statement decomposition and
//! verification steps behind the judge-based metrics.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ragas::split_sentences;
use crate::embed::normalize_token;
use crate::engine::{GenerationParams, LlmProvider, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge has no script for {0}")]
    Unscripted(&'static str),
    #[error("judge provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("cannot parse judge output: {0}")]
    Unparseable(String),
    #[error("judge returned sentence index {index} but only {len} sentences exist")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("judge returned TP {tp} for {statements} answer statements")]
    TooManyTruePositives { tp: usize, statements: usize },
}

/// Statement-level comparison of an answer against the golden answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub trait Judge: Send + Sync {
    fn name(&self) -> &str;

    fn relevant_sentences(
        &self,
        question: &str,
        sentences: &[String],
    ) -> Result<BTreeSet<usize>, JudgeError>;

    fn decompose(&self, answer: &str) -> Result<Vec<String>, JudgeError>;

    fn verify(&self, statement: &str, context: &str) -> Result<bool, JudgeError>;

    fn classify(
        &self,
        answer_statements: &[String],
        golden_statements: &[String],
    ) -> Result<Classification, JudgeError>;
}

/// Checks the judge output contract shared by every implementation.
pub(crate) fn checked_indices(
    indices: BTreeSet<usize>,
    len: usize,
) -> Result<BTreeSet<usize>, JudgeError> {
    match indices.iter().find(|&&i| i >= len) {
        Some(&index) => Err(JudgeError::IndexOutOfRange { index, len }),
        None => Ok(indices),
    }
}

pub(crate) fn checked_classification(
    c: Classification,
    statements: usize,
) -> Result<Classification, JudgeError> {
    if c.tp > statements {
        return Err(JudgeError::TooManyTruePositives {
            tp: c.tp,
            statements,
        });
    }
    Ok(c)
}

type RelevanceFn = dyn Fn(&str, &[String]) -> Result<BTreeSet<usize>, JudgeError> + Send + Sync;
type DecomposeFn = dyn Fn(&str) -> Result<Vec<String>, JudgeError> + Send + Sync;
type VerifyFn = dyn Fn(&str, &str) -> Result<bool, JudgeError> + Send + Sync;
type ClassifyFn = dyn Fn(&[String], &[String]) -> Result<Classification, JudgeError> + Send + Sync;

/// Offline judge whose answers come from closures. Operations without a
/// closure fail with [`JudgeError::Unscripted`].
#[derive(Clone, Default)]
pub struct ScriptedJudge {
    relevance: Option<Arc<RelevanceFn>>,
    decompose: Option<Arc<DecomposeFn>>,
    verify: Option<Arc<VerifyFn>>,
    classify: Option<Arc<ClassifyFn>>,
}

impl std::fmt::Debug for ScriptedJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedJudge")
            .field("relevance", &self.relevance.is_some())
            .field("decompose", &self.decompose.is_some())
            .field("verify", &self.verify.is_some())
            .field("classify", &self.classify.is_some())
            .finish()
    }
}

impl ScriptedJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_relevance(
        mut self,
        f: impl Fn(&str, &[String]) -> Result<BTreeSet<usize>, JudgeError> + Send + Sync + 'static,
    ) -> Self {
        self.relevance = Some(Arc::new(f));
        self
    }

    pub fn on_decompose(
        mut self,
        f: impl Fn(&str) -> Result<Vec<String>, JudgeError> + Send + Sync + 'static,
    ) -> Self {
        self.decompose = Some(Arc::new(f));
        self
    }

    pub fn on_verify(
        mut self,
        f: impl Fn(&str, &str) -> Result<bool, JudgeError> + Send + Sync + 'static,
    ) -> Self {
        self.verify = Some(Arc::new(f));
        self
    }

    pub fn on_classify(
        mut self,
        f: impl Fn(&[String], &[String]) -> Result<Classification, JudgeError>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.classify = Some(Arc::new(f));
        self
    }

    /// Sentences containing `marker` are relevant.
    pub fn relevant_if_contains(self, marker: impl Into<String>) -> Self {
        let marker = marker.into();
        self.on_relevance(move |_, sentences| {
            Ok(sentences
                .iter()
                .enumerate()
                .filter(|(_, s)| s.contains(marker.as_str()))
                .map(|(i, _)| i)
                .collect())
        })
    }

    /// Sentence-split decomposition, marker-based support, exact-match
    /// classification. Handy for whole-harness tests.
    pub fn marker_based(marker: impl Into<String>) -> Self {
        let marker = marker.into();
        let m = marker.clone();
        Self::new()
            .relevant_if_contains(marker)
            .on_decompose(|answer| Ok(split_sentences(answer)))
            .on_verify(move |statement, context| {
                Ok(context.contains(statement) || statement.contains(m.as_str()))
            })
            .on_classify(|answer, golden| Ok(exact_classification(answer, golden)))
    }
}

/// TP = answer statements that also occur in the golden set.
pub fn exact_classification(answer: &[String], golden: &[String]) -> Classification {
    let golden_set: HashSet<&str> = golden.iter().map(String::as_str).collect();
    let answer_set: HashSet<&str> = answer.iter().map(String::as_str).collect();
    let tp = answer.iter().filter(|s| golden_set.contains(s.as_str())).count();
    Classification {
        tp,
        fp: answer.len() - tp,
        fn_: golden.iter().filter(|s| !answer_set.contains(s.as_str())).count(),
    }
}

impl Judge for ScriptedJudge {
    fn name(&self) -> &str {
        "scripted"
    }

    fn relevant_sentences(
        &self,
        question: &str,
        sentences: &[String],
    ) -> Result<BTreeSet<usize>, JudgeError> {
        let f = self
            .relevance
            .as_ref()
            .ok_or(JudgeError::Unscripted("relevant_sentences"))?;
        checked_indices(f(question, sentences)?, sentences.len())
    }

    fn decompose(&self, answer: &str) -> Result<Vec<String>, JudgeError> {
        let f = self
            .decompose
            .as_ref()
            .ok_or(JudgeError::Unscripted("decompose"))?;
        f(answer)
    }

    fn verify(&self, statement: &str, context: &str) -> Result<bool, JudgeError> {
        let f = self.verify.as_ref().ok_or(JudgeError::Unscripted("verify"))?;
        f(statement, context)
    }

    fn classify(
        &self,
        answer_statements: &[String],
        golden_statements: &[String],
    ) -> Result<Classification, JudgeError> {
        let f = self
            .classify
            .as_ref()
            .ok_or(JudgeError::Unscripted("classify"))?;
        checked_classification(
            f(answer_statements, golden_statements)?,
            answer_statements.len(),
        )
    }
}

/// Deterministic judge built on content-word overlap. Words shorter than
/// `min_word_len` characters are ignored.
#[derive(Debug, Clone)]
pub struct LexicalJudge {
    pub min_word_len: usize,
    /// Fraction of a statement's content words that must appear in the
    /// context (or in a matching statement) to count as supported.
    pub threshold: f64,
}

impl Default for LexicalJudge {
    fn default() -> Self {
        LexicalJudge {
            min_word_len: 4,
            threshold: 0.5,
        }
    }
}

impl LexicalJudge {
    fn content_words(&self, text: &str) -> BTreeSet<String> {
        text.split_whitespace()
            .map(normalize_token)
            .filter(|w| w.chars().count() >= self.min_word_len)
            .collect()
    }

    fn coverage(&self, statement: &BTreeSet<String>, other: &BTreeSet<String>) -> f64 {
        if statement.is_empty() {
            return 1.0;
        }
        statement.intersection(other).count() as f64 / statement.len() as f64
    }
}

impl Judge for LexicalJudge {
    fn name(&self) -> &str {
        "lexical"
    }

    fn relevant_sentences(
        &self,
        question: &str,
        sentences: &[String],
    ) -> Result<BTreeSet<usize>, JudgeError> {
        let q = self.content_words(question);
        Ok(sentences
            .iter()
            .enumerate()
            .filter(|(_, s)| !self.content_words(s).is_disjoint(&q))
            .map(|(i, _)| i)
            .collect())
    }

    fn decompose(&self, answer: &str) -> Result<Vec<String>, JudgeError> {
        Ok(split_sentences(answer))
    }

    fn verify(&self, statement: &str, context: &str) -> Result<bool, JudgeError> {
        let s = self.content_words(statement);
        Ok(self.coverage(&s, &self.content_words(context)) >= self.threshold)
    }

    fn classify(
        &self,
        answer_statements: &[String],
        golden_statements: &[String],
    ) -> Result<Classification, JudgeError> {
        let answer: Vec<_> = answer_statements
            .iter()
            .map(|s| self.content_words(s))
            .collect();
        let golden: Vec<_> = golden_statements
            .iter()
            .map(|s| self.content_words(s))
            .collect();
        let matches = |a: &BTreeSet<String>, g: &BTreeSet<String>| {
            !a.is_empty() && self.coverage(a, g) >= self.threshold
        };
        let tp = answer
            .iter()
            .filter(|a| golden.iter().any(|g| matches(a, g)))
            .count();
        let fn_ = golden
            .iter()
            .filter(|g| !answer.iter().any(|a| matches(a, g)))
            .count();
        Ok(Classification {
            tp,
            fp: answer.len() - tp,
            fn_,
        })
    }
}

/// Judge backed by a chat model. Prompts ask for JSON so the answers can be
/// parsed strictly.
pub struct LlmJudge {
    llm: Arc<dyn LlmProvider>,
    params: GenerationParams,
}

impl LlmJudge {
    pub fn new(llm: Arc<dyn LlmProvider>) -> Self {
        LlmJudge {
            llm,
            params: GenerationParams::default(),
        }
    }

    fn ask(&self, prompt: &str) -> Result<String, JudgeError> {
        Ok(self.llm.generate(prompt, &self.params)?)
    }
}

/// First JSON value of the expected shape embedded in free text.
fn extract_json<T: serde::de::DeserializeOwned>(text: &str, open: char) -> Result<T, JudgeError> {
    let unparseable = || JudgeError::Unparseable(text.chars().take(200).collect());
    let start = text.find(open).ok_or_else(unparseable)?;
    let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<T>();
    match stream.next() {
        Some(Ok(v)) => Ok(v),
        _ => Err(unparseable()),
    }
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{i}. {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Judge for LlmJudge {
    fn name(&self) -> &str {
        self.llm.name()
    }

    fn relevant_sentences(
        &self,
        question: &str,
        sentences: &[String],
    ) -> Result<BTreeSet<usize>, JudgeError> {
        let prompt = format!(
            "Question: {question}\n\nNumbered context sentences:\n{}\n\n\
             Reply with a JSON array holding the numbers of the sentences that \
             are needed to answer the question, e.g. [0, 3]. Reply [] if none are.",
            numbered(sentences)
        );
        let picked: BTreeSet<usize> = extract_json(&self.ask(&prompt)?, '[')?;
        checked_indices(picked, sentences.len())
    }

    fn decompose(&self, answer: &str) -> Result<Vec<String>, JudgeError> {
        let prompt = format!(
            "Break the following answer into short, self-contained factual \
             statements. Reply with a JSON array of strings.\n\nAnswer: {answer}"
        );
        extract_json(&self.ask(&prompt)?, '[')
    }

    fn verify(&self, statement: &str, context: &str) -> Result<bool, JudgeError> {
        let prompt = format!(
            "Context:\n{context}\n\nStatement: {statement}\n\n\
             Can the statement be inferred from the context? Reply with JSON \
             {{\"supported\": true}} or {{\"supported\": false}}."
        );
        #[derive(Deserialize)]
        struct Verdict {
            supported: bool,
        }
        let v: Verdict = extract_json(&self.ask(&prompt)?, '{')?;
        Ok(v.supported)
    }

    fn classify(
        &self,
        answer_statements: &[String],
        golden_statements: &[String],
    ) -> Result<Classification, JudgeError> {
        let prompt = format!(
            "Answer statements:\n{}\n\nGround truth statements:\n{}\n\n\
             Count TP (answer statements supported by the ground truth), FP \
             (answer statements not supported by it) and FN (ground truth \
             statements missing from the answer). Reply with JSON \
             {{\"tp\": n, \"fp\": n, \"fn\": n}}.",
            numbered(answer_statements),
            numbered(golden_statements)
        );
        let c: Classification = extract_json(&self.ask(&prompt)?, '{')?;
        checked_classification(c, answer_statements.len())
    }
}
