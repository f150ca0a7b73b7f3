use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Topic buckets used when tagging logged questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionCategory {
    GenericInformation,
    CoursesInformation,
    OtherUniversityRelated,
    OffTopic,
    ServicesAndStructures,
    TaxesAndScholarships,
    UniversityEnvironment,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 7] = [
        QuestionCategory::GenericInformation,
        QuestionCategory::CoursesInformation,
        QuestionCategory::OtherUniversityRelated,
        QuestionCategory::OffTopic,
        QuestionCategory::ServicesAndStructures,
        QuestionCategory::TaxesAndScholarships,
        QuestionCategory::UniversityEnvironment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionCategory::GenericInformation => "GenericInformation",
            QuestionCategory::CoursesInformation => "CoursesInformation",
            QuestionCategory::OtherUniversityRelated => "OtherUniversityRelated",
            QuestionCategory::OffTopic => "OffTopic",
            QuestionCategory::ServicesAndStructures => "ServicesAndStructures",
            QuestionCategory::TaxesAndScholarships => "TaxesAndScholarships",
            QuestionCategory::UniversityEnvironment => "UniversityEnvironment",
        }
    }
}

impl fmt::Display for QuestionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RespondentRole {
    SecondarySchoolStudent,
    UniversityStudent,
    Professor,
    Other,
}

impl RespondentRole {
    pub const ALL: [RespondentRole; 4] = [
        RespondentRole::SecondarySchoolStudent,
        RespondentRole::UniversityStudent,
        RespondentRole::Professor,
        RespondentRole::Other,
    ];
}

/// Per-answer judgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerRating {
    Excellent,
    Good,
    Bad,
}

impl AnswerRating {
    pub const ALL: [AnswerRating; 3] = [AnswerRating::Excellent, AnswerRating::Good, AnswerRating::Bad];
}

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

/// Feedback as submitted by a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackInput {
    pub respondent_role: RespondentRole,
    pub overall_rating: u8,
    #[serde(default)]
    pub per_answer_ratings: Vec<AnswerRating>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session_id: String,
    pub respondent_role: RespondentRole,
    pub overall_rating: u8,
    /// Aligned with the session turns; may be shorter.
    pub per_answer_ratings: Vec<AnswerRating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionLogEntry {
    pub session_id: String,
    /// 0-based position of the turn within its session.
    pub turn: usize,
    pub question: String,
    pub category: Option<QuestionCategory>,
    pub retrieved_doc_ids: Vec<String>,
    pub answer_tokens: usize,
    pub latency_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_names_round_trip() {
        for c in QuestionCategory::ALL {
            assert_eq!(c.as_str().parse::<QuestionCategory>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!("Sport".parse::<QuestionCategory>().is_err());
    }

    #[test]
    fn feedback_input_rejects_unknown_fields() {
        let ok = r#"{"respondent_role":"Professor","overall_rating":4,"per_answer_ratings":["Good"]}"#;
        assert!(serde_json::from_str::<FeedbackInput>(ok).is_ok());
        let bad = r#"{"respondent_role":"Professor","overall_rating":4,"stars":5}"#;
        assert!(serde_json::from_str::<FeedbackInput>(bad).is_err());
    }
}
