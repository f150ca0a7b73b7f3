use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

/// Reference question and manually written answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenPair {
    pub question: String,
    pub golden_answer: String,
    #[serde(default)]
    pub source_doc_ids: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum GoldenError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("golden pair {index} has an empty {field}")]
    EmptyField { index: usize, field: &'static str },
    #[error("no golden pairs")]
    Empty,
}

const BUILTIN: &str = include_str!("../../fixtures/golden_qa.jsonl");

fn validate(pairs: Vec<GoldenPair>) -> Result<Vec<GoldenPair>, GoldenError> {
    if pairs.is_empty() {
        return Err(GoldenError::Empty);
    }
    for (index, p) in pairs.iter().enumerate() {
        if p.question.trim().is_empty() {
            return Err(GoldenError::EmptyField { index, field: "question" });
        }
        if p.golden_answer.trim().is_empty() {
            return Err(GoldenError::EmptyField { index, field: "golden_answer" });
        }
    }
    Ok(pairs)
}

pub fn parse_golden(text: &str, origin: &Path) -> Result<Vec<GoldenPair>, GoldenError> {
    validate(io::parse_jsonl(text, origin)?)
}

pub fn load_golden(path: &Path) -> Result<Vec<GoldenPair>, GoldenError> {
    validate(io::read_jsonl(path)?)
}

/// The six question/answer pairs shipped with the crate.
pub fn builtin_golden() -> Vec<GoldenPair> {
    parse_golden(BUILTIN, Path::new("golden_qa.jsonl")).expect("bundled golden fixture is valid")
}
