//! Fine-tuning dataset: QA pair generation, validation split and export.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocKind, RawDocument};
use crate::engine::{GenerationParams, LlmProvider, ProviderError};
use crate::io::{self, IoError};

/// System instruction attached to every exported example.
pub const DEFAULT_SYSTEM_PROMPT: &str =
    "Sei unipa-gpt, il chatbot e assistente virtuale dell'Università degli Studi di Palermo.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    AutoDetails,
    AutoOutline,
    FaqExtracted,
    Manual,
}

impl Origin {
    fn is_education(self) -> bool {
        matches!(self, Origin::AutoDetails | Origin::AutoOutline)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneExample {
    pub system_prompt: String,
    pub question: String,
    pub answer: String,
    pub origin: Origin,
    pub source_doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course_id: Option<String>,
    /// Marks FAQ/manual pairs that also belong in the validation set.
    #[serde(default)]
    pub validation_eligible: bool,
}

/// Exported form: keys `system`, `question`, `answer`, in that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub system: String,
    pub question: String,
    pub answer: String,
}

impl From<&FineTuneExample> for FineTuneRecord {
    fn from(ex: &FineTuneExample) -> Self {
        FineTuneRecord {
            system: ex.system_prompt.clone(),
            question: ex.question.clone(),
            answer: ex.answer.clone(),
        }
    }
}

fn describe_question(course: &str) -> String {
    format!("Descrivi il corso di laurea in {course}.")
}

fn topics_question(course: &str) -> String {
    format!("Quali sono gli argomenti del corso di laurea in {course}?")
}

fn generation_prompt(question: &str, doc: &RawDocument) -> String {
    format!("{question}\n\nDocumento:\n{}", doc.text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationFailure {
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct PairBatch {
    pub examples: Vec<FineTuneExample>,
    pub failures: Vec<GenerationFailure>,
}

/// Builds the training pairs: one describe-course pair per details document,
/// one list-topics pair per outline document (answers come from
/// `generator`), then `faq_pairs` unchanged.
pub fn generate_finetune_pairs(
    docs: &[RawDocument],
    generator: &dyn LlmProvider,
    faq_pairs: &[FineTuneExample],
    system_prompt: &str,
) -> PairBatch {
    let params = GenerationParams::default();
    let mut batch = PairBatch::default();

    for doc in docs {
        let (origin, question) = match doc.kind {
            DocKind::Details => (Origin::AutoDetails, describe_question(&doc.title)),
            DocKind::Outline => (Origin::AutoOutline, topics_question(&doc.title)),
            _ => continue,
        };
        let answer = generator
            .generate(&generation_prompt(&question, doc), &params)
            .and_then(|a| {
                if a.trim().is_empty() {
                    Err(ProviderError::BadResponse("empty answer".into()))
                } else {
                    Ok(a)
                }
            });
        match answer {
            Ok(answer) => batch.examples.push(FineTuneExample {
                system_prompt: system_prompt.to_string(),
                question,
                answer,
                origin,
                source_doc_id: doc.doc_id.clone(),
                course_id: doc.course_id.clone(),
                validation_eligible: false,
            }),
            Err(e) => {
                tracing::warn!(doc_id = %doc.doc_id, error = %e, "pair generation failed");
                batch.failures.push(GenerationFailure {
                    doc_id: doc.doc_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    batch.examples.extend(faq_pairs.iter().cloned());
    batch
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationPolicy {
    /// Validation pairs are removed from the training set.
    #[default]
    Holdout,
    /// Validation pairs are copied; the training set keeps every pair.
    Sample,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("education pair for `{0}` has no course_id")]
    MissingCourse(String),
    #[error("course `{0}` has neither a details nor an outline pair")]
    CourseWithoutPairs(String),
}

/// Picks one details-or-outline pair per course (seeded) plus every
/// flagged FAQ/manual pair for validation. Both outputs keep input order.
pub fn split_validation(
    pairs: &[FineTuneExample],
    seed: u64,
    policy: ValidationPolicy,
) -> Result<(Vec<FineTuneExample>, Vec<FineTuneExample>), SplitError> {
    let mut course_order: Vec<&str> = Vec::new();
    let mut by_course: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut courses_without_pairs: Vec<&str> = Vec::new();

    for (i, p) in pairs.iter().enumerate() {
        match (&p.course_id, p.origin.is_education()) {
            (Some(c), true) => {
                let slot = by_course.entry(c.as_str()).or_default();
                if slot.is_empty() {
                    course_order.push(c.as_str());
                }
                slot.push(i);
            }
            (None, true) => return Err(SplitError::MissingCourse(p.source_doc_id.clone())),
            (Some(c), false) => courses_without_pairs.push(c.as_str()),
            (None, false) => {}
        }
    }
    if let Some(c) = courses_without_pairs
        .into_iter()
        .find(|c| !by_course.contains_key(c))
    {
        return Err(SplitError::CourseWithoutPairs(c.to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_valid = vec![false; pairs.len()];
    for course in course_order {
        let candidates = &by_course[course];
        is_valid[candidates[rng.gen_range(0..candidates.len())]] = true;
    }
    for (i, p) in pairs.iter().enumerate() {
        if !p.origin.is_education() && p.validation_eligible {
            is_valid[i] = true;
        }
    }

    let valid = pairs
        .iter()
        .zip(&is_valid)
        .filter(|(_, &v)| v)
        .map(|(p, _)| p.clone())
        .collect();
    let train = match policy {
        ValidationPolicy::Sample => pairs.to_vec(),
        ValidationPolicy::Holdout => pairs
            .iter()
            .zip(&is_valid)
            .filter(|(_, &v)| !v)
            .map(|(p, _)| p.clone())
            .collect(),
    };
    Ok((train, valid))
}

pub fn finetune_to_jsonl(pairs: &[FineTuneExample]) -> Result<Vec<u8>, IoError> {
    let records: Vec<FineTuneRecord> = pairs.iter().map(FineTuneRecord::from).collect();
    io::to_jsonl(&records)
}

/// Writes the export file atomically and returns its size in bytes.
pub fn export_finetune(pairs: &[FineTuneExample], destination: &Path) -> Result<u64, IoError> {
    let bytes = finetune_to_jsonl(pairs)?;
    io::write_atomic(destination, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn import_finetune(source: &Path) -> Result<Vec<FineTuneRecord>, IoError> {
    io::read_jsonl(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Section;
    use crate::engine::{Matcher, MockProvider};
    use proptest::prelude::*;

    fn edu_doc(course: &str, kind: DocKind) -> RawDocument {
        let suffix = if kind == DocKind::Details { "details" } else { "outline" };
        RawDocument {
            doc_id: format!("{course}/{suffix}"),
            section: Section::Education,
            kind,
            text: format!("Testo {course} {suffix}"),
            source_url: String::new(),
            title: format!("Corso {course}"),
            course_id: Some(course.into()),
        }
    }

    fn edu_pairs(n_courses: usize) -> Vec<FineTuneExample> {
        (0..n_courses)
            .flat_map(|c| {
                [Origin::AutoDetails, Origin::AutoOutline].map(|o| FineTuneExample {
                    system_prompt: "s".into(),
                    question: format!("q{c}{o:?}"),
                    answer: "a".into(),
                    origin: o,
                    source_doc_id: format!("c{c}/{o:?}"),
                    course_id: Some(format!("c{c}")),
                    validation_eligible: false,
                })
            })
            .collect()
    }

    fn faq(i: usize, flagged: bool) -> FineTuneExample {
        FineTuneExample {
            system_prompt: "s".into(),
            question: format!("faq {i}?"),
            answer: format!("risposta {i}"),
            origin: Origin::FaqExtracted,
            source_doc_id: format!("info{i}"),
            course_id: None,
            validation_eligible: flagged,
        }
    }

    #[test]
    fn echo_generator_answers_with_document() {
        let echo = MockProvider::echo_after("Documento:\n");
        let docs = [edu_doc("c1", DocKind::Details)];
        let batch = generate_finetune_pairs(&docs, &echo, &[], DEFAULT_SYSTEM_PROMPT);
        assert_eq!(batch.examples.len(), 1);
        assert_eq!(batch.examples[0].answer, docs[0].text);
        assert_eq!(batch.examples[0].question, "Descrivi il corso di laurea in Corso c1.");
        assert!(batch.failures.is_empty());
    }

    #[test]
    fn generator_failure_is_reported() {
        let mock = MockProvider::builder()
            .fail(Matcher::Contains("Testo c2".into()), "boom")
            .respond(Matcher::Any, "ok")
            .build();
        let docs = [edu_doc("c1", DocKind::Outline), edu_doc("c2", DocKind::Outline)];
        let batch = generate_finetune_pairs(&docs, &mock, &[faq(0, false)], "s");
        assert_eq!(batch.examples.len(), 2);
        assert_eq!(batch.examples[0].origin, Origin::AutoOutline);
        assert_eq!(batch.examples[1].origin, Origin::FaqExtracted);
        assert_eq!(batch.failures.len(), 1);
        assert_eq!(batch.failures[0].doc_id, "c2/outline");
    }

    #[test]
    fn info_and_objective_docs_do_not_generate_pairs() {
        let echo = MockProvider::echo_after("Documento:\n");
        let docs = [RawDocument::info("i", "t", "x")];
        assert!(generate_finetune_pairs(&docs, &echo, &[], "s").examples.is_empty());
        assert!(echo.calls().is_empty());
    }

    #[test]
    fn split_empty() {
        let (t, v) = split_validation(&[], 3, ValidationPolicy::Holdout).unwrap();
        assert!(t.is_empty() && v.is_empty());
    }

    #[test]
    fn one_validation_pair_per_course_for_many_seeds() {
        let pairs = edu_pairs(4);
        for seed in 0..100 {
            let (train, valid) = split_validation(&pairs, seed, ValidationPolicy::Holdout).unwrap();
            assert_eq!(valid.len(), 4);
            let mut courses: Vec<_> = valid.iter().map(|p| p.course_id.clone().unwrap()).collect();
            courses.sort();
            courses.dedup();
            assert_eq!(courses.len(), 4, "seed {seed}");
            assert_eq!(train.len(), 4);
        }
    }

    #[test]
    fn seeds_vary_the_pick() {
        let pairs = edu_pairs(8);
        let picks: std::collections::HashSet<Vec<String>> = (0..20)
            .map(|s| {
                split_validation(&pairs, s, ValidationPolicy::Holdout)
                    .unwrap()
                    .1
                    .into_iter()
                    .map(|p| p.source_doc_id)
                    .collect()
            })
            .collect();
        assert!(picks.len() > 1);
        let a = split_validation(&pairs, 7, ValidationPolicy::Holdout).unwrap();
        let b = split_validation(&pairs, 7, ValidationPolicy::Holdout).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_policy_keeps_training_whole() {
        let mut pairs = edu_pairs(3);
        pairs.push(faq(0, true));
        pairs.push(faq(1, false));
        let (train, valid) = split_validation(&pairs, 1, ValidationPolicy::Sample).unwrap();
        assert_eq!(train, pairs);
        assert_eq!(valid.len(), 4);
        assert!(valid.iter().any(|p| p.source_doc_id == "info0"));
    }

    #[test]
    fn split_errors() {
        let mut pairs = edu_pairs(1);
        pairs[0].course_id = None;
        assert!(matches!(
            split_validation(&pairs, 0, ValidationPolicy::Holdout),
            Err(SplitError::MissingCourse(_))
        ));
        let mut orphan = faq(0, false);
        orphan.course_id = Some("lonely".into());
        assert_eq!(
            split_validation(&[orphan], 0, ValidationPolicy::Holdout),
            Err(SplitError::CourseWithoutPairs("lonely".into()))
        );
    }

    #[test]
    fn export_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        assert_eq!(export_finetune(&[], &empty).unwrap(), 0);
        assert_eq!(std::fs::read(&empty).unwrap(), b"");

        let one = dir.path().join("one.jsonl");
        let n = export_finetune(&[faq(1, false)], &one).unwrap();
        let bytes = std::fs::read(&one).unwrap();
        assert_eq!(n as usize, bytes.len());
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        assert!(bytes.ends_with(b"}\n"));
        assert!(String::from_utf8(bytes)
            .unwrap()
            .starts_with(r#"{"system":"s","question":"faq 1?","answer":"risposta 1"}"#));
    }

    #[test]
    fn export_to_missing_directory_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("missing").join("ft.jsonl");
        let err = export_finetune(&[faq(0, false)], &bad).unwrap_err();
        assert!(err.to_string().contains("ft.jsonl"));
    }

    proptest! {
        #[test]
        fn split_partitions_pairs(n_courses in 0usize..15, flags in prop::collection::vec(any::<bool>(), 0..10), seed in any::<u64>()) {
            let mut pairs = edu_pairs(n_courses);
            pairs.extend(flags.iter().enumerate().map(|(i, &f)| faq(i, f)));
            let (train, valid) = split_validation(&pairs, seed, ValidationPolicy::Holdout).unwrap();
            prop_assert_eq!(train.len() + valid.len(), pairs.len());
            let flagged = flags.iter().filter(|&&f| f).count();
            prop_assert_eq!(valid.len(), n_courses + flagged);
            for p in &pairs {
                let in_train = train.contains(p);
                let in_valid = valid.contains(p);
                prop_assert!(in_train != in_valid);
            }
        }

        #[test]
        fn export_import_round_trip(texts in prop::collection::vec(("[^\n]{1,20}", "\\PC{1,30}", "(.|\n){1,40}"), 0..8)) {
            let pairs: Vec<_> = texts.iter().map(|(s, q, a)| FineTuneExample {
                system_prompt: s.clone(),
                question: q.clone(),
                answer: a.clone(),
                origin: Origin::Manual,
                source_doc_id: "d".into(),
                course_id: None,
                validation_eligible: false,
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.jsonl");
            export_finetune(&pairs, &path).unwrap();
            let back = import_finetune(&path).unwrap();
            let expected: Vec<FineTuneRecord> = pairs.iter().map(FineTuneRecord::from).collect();
            prop_assert_eq!(back, expected);
            let again = finetune_to_jsonl(&pairs).unwrap();
            prop_assert_eq!(std::fs::read(&path).unwrap(), again);
        }
    }
}
