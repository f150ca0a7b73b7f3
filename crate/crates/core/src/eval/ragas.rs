//! Judge-based answer and context quality metrics.

use serde::{Deserialize, Serialize};

use super::judge::{Judge, JudgeError};
use crate::embed::{EmbedError, EmbeddingProvider};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("context has no sentences")]
    EmptyContext,
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("embedding failed: {0}")]
    Embed(String),
    #[error("invalid correctness weights: {0}")]
    Weights(String),
}

impl From<EmbedError> for MetricError {
    fn from(e: EmbedError) -> Self {
        MetricError::Embed(e.to_string())
    }
}

/// Splits after '.', '!' or '?' when followed by whitespace or the end of
/// the text. Pieces are trimmed; empty pieces are dropped. Abbreviations
/// such as "prof. Rossi" split too.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let piece = text[start..end].trim();
                if !piece.is_empty() {
                    out.push(piece.to_string());
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Share of context sentences the judge marks as relevant to the question.
pub fn context_relevancy(
    question: &str,
    context: &str,
    judge: &dyn Judge,
) -> Result<f64, MetricError> {
    let sentences = split_sentences(context);
    if sentences.is_empty() {
        return Err(MetricError::EmptyContext);
    }
    let picked = judge.relevant_sentences(question, &sentences)?;
    Ok(picked.len() as f64 / sentences.len() as f64)
}

/// Share of answer statements supported by the contexts. `None` when the
/// answer decomposes into no statements.
pub fn faithfulness(
    answer: &str,
    contexts: &[String],
    judge: &dyn Judge,
) -> Result<Option<f64>, MetricError> {
    let statements = judge.decompose(answer)?;
    if statements.is_empty() {
        return Ok(None);
    }
    let context = contexts.join("\n\n");
    let mut supported = 0usize;
    for s in &statements {
        if judge.verify(s, &context)? {
            supported += 1;
        }
    }
    Ok(Some(supported as f64 / statements.len() as f64))
}

/// Blend weights for answer correctness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectnessWeights {
    pub factual: f64,
    pub semantic: f64,
}

impl Default for CorrectnessWeights {
    fn default() -> Self {
        CorrectnessWeights {
            factual: 0.75,
            semantic: 0.25,
        }
    }
}

impl CorrectnessWeights {
    pub fn validate(&self) -> Result<(), MetricError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.factual) || !ok(self.semantic) {
            return Err(MetricError::Weights("weights must be finite and non-negative".into()));
        }
        if ((self.factual + self.semantic) - 1.0).abs() > 1e-9 {
            return Err(MetricError::Weights(format!(
                "weights must sum to 1, got {}",
                self.factual + self.semantic
            )));
        }
        Ok(())
    }
}

/// TP / (TP + (FP + FN) / 2), 0 when every count is 0.
pub fn statement_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp as f64 + 0.5 * (fp + fn_) as f64;
    if denom == 0.0 {
        0.0
    } else {
        tp as f64 / denom
    }
}

pub fn answer_correctness(
    answer: &str,
    golden_answer: &str,
    judge: &dyn Judge,
    embedder: &dyn EmbeddingProvider,
    weights: CorrectnessWeights,
) -> Result<f64, MetricError> {
    weights.validate()?;
    let answer_statements = judge.decompose(answer)?;
    let golden_statements = judge.decompose(golden_answer)?;
    let c = judge.classify(&answer_statements, &golden_statements)?;
    let f1 = statement_f1(c.tp, c.fp, c.fn_);
    let vectors = embedder.embed(&[answer, golden_answer])?;
    let sim = vectors[0].cosine(&vectors[1]).max(0.0);
    Ok((weights.factual * f1 + weights.semantic * sim).clamp(0.0, 1.0))
}
