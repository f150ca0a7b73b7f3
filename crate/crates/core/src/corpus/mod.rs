//! Course records and the three corpus renderings built from them.
//!
//! Every course yields a *details* document and a *course outline* document.
//! The variants differ only in where per-class educational objectives go:
//!
//! * `Clear` leaves them out.
//! * `Full` keeps the clear outline and adds one extra document per class.
//! * `Emb` appends them to the outline document itself.
//!
//! Free-form info documents pass through untouched in every variant.

mod finetune;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

pub use finetune::{
    export_finetune, finetune_to_jsonl, generate_finetune_pairs, import_finetune,
    split_validation, FineTuneExample, FineTuneRecord, GenerationFailure, Origin, PairBatch,
    SplitError, ValidationPolicy, DEFAULT_SYSTEM_PROMPT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Bachelor,
    Master,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class_name: String,
    pub credits: u32,
    pub professor: String,
    pub period: String,
    pub sector: String,
    pub year: u32,
    #[serde(default)]
    pub objectives: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseRecord {
    pub course_id: String,
    pub name: String,
    pub level: Level,
    pub department: String,
    #[serde(default)]
    pub curriculum: String,
    pub description: String,
    #[serde(default)]
    pub classes: Vec<ClassRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Section {
    Education,
    FutureStudents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DocKind {
    Details,
    Outline,
    ClassObjectives,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub section: Section,
    pub kind: DocKind,
    pub text: String,
    #[serde(default)]
    pub source_url: String,
    /// Course name for Education documents, page title for info documents.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    /// Owning course for Education documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course_id: Option<String>,
}

impl RawDocument {
    pub fn info(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        RawDocument {
            doc_id: doc_id.into(),
            section: Section::FutureStudents,
            kind: DocKind::Info,
            text: text.into(),
            source_url: String::new(),
            title: title.into(),
            course_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusVariant {
    Clear,
    Full,
    Emb,
}

impl fmt::Display for CorpusVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusVariant::Clear => "clear",
            CorpusVariant::Full => "full",
            CorpusVariant::Emb => "emb",
        })
    }
}

impl FromStr for CorpusVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clear" => Ok(CorpusVariant::Clear),
            "full" => Ok(CorpusVariant::Full),
            "emb" => Ok(CorpusVariant::Emb),
            other => Err(format!("unknown corpus variant `{other}` (expected clear, full or emb)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate course_id `{0}`")]
    DuplicateCourse(String),
    #[error("duplicate doc_id `{0}`")]
    DuplicateDoc(String),
    #[error("info document `{0}` must be a FutureStudents/Info document")]
    NotAnInfoDoc(String),
    #[error("info document `{0}` has empty text")]
    EmptyInfoDoc(String),
    #[error("class `{class}` of course `{course_id}` has no objectives, required by the {variant} variant")]
    MissingObjectives {
        course_id: String,
        class: String,
        variant: CorpusVariant,
    },
    #[error("class `{class}` of course `{course_id}` has year 0")]
    InvalidYear { course_id: String, class: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

fn level_label(level: Level) -> &'static str {
    match level {
        Level::Bachelor => "Laurea triennale",
        Level::Master => "Laurea magistrale",
    }
}

fn render_details(course: &CourseRecord) -> String {
    let mut text = format!(
        "Corso di laurea: {}\nTipologia: {}\nDipartimento: {}\n",
        course.name,
        level_label(course.level),
        course.department
    );
    if !course.curriculum.is_empty() {
        text.push_str(&format!("Curriculum: {}\n", course.curriculum));
    }
    text.push('\n');
    text.push_str(&course.description);
    text
}

fn render_outline(course: &CourseRecord) -> String {
    let mut text = format!("Piano di studi del corso di {}", course.name);
    if !course.curriculum.is_empty() {
        text.push_str(&format!(" (curriculum {})", course.curriculum));
    }
    text.push('\n');
    let mut years: Vec<u32> = course.classes.iter().map(|c| c.year).collect();
    years.sort_unstable();
    years.dedup();
    for year in years {
        text.push_str(&format!("\nAnno {year}\n"));
        for class in course.classes.iter().filter(|c| c.year == year) {
            text.push_str(&format!(
                "- {}: {} CFU, docente {}, periodo {}, settore {}\n",
                class.class_name, class.credits, class.professor, class.period, class.sector
            ));
        }
    }
    text
}

fn render_objectives_section(course: &CourseRecord) -> String {
    let mut text = String::from("\nObiettivi formativi degli insegnamenti\n");
    for class in &course.classes {
        text.push_str(&format!("\n{}: {}\n", class.class_name, class.objectives));
    }
    text
}

fn render_class_objectives(course: &CourseRecord, class: &ClassRecord) -> String {
    format!(
        "Obiettivi formativi dell'insegnamento {} ({})\n\n{}",
        class.class_name, course.name, class.objectives
    )
}

fn course_doc(course: &CourseRecord, suffix: &str, kind: DocKind, text: String) -> RawDocument {
    RawDocument {
        doc_id: format!("{}/{}", course.course_id, suffix),
        section: Section::Education,
        kind,
        text,
        source_url: String::new(),
        title: course.name.clone(),
        course_id: Some(course.course_id.clone()),
    }
}

/// Renders the documents of one corpus variant.
///
/// Order is deterministic: courses in input order (details, outline, then
/// class objectives in class order), followed by the info documents.
pub fn build_variant(
    courses: &[CourseRecord],
    info_docs: &[RawDocument],
    variant: CorpusVariant,
) -> Result<Vec<RawDocument>, CorpusError> {
    let mut seen_courses = HashSet::new();
    let mut docs = Vec::with_capacity(courses.len() * 2 + info_docs.len());

    for course in courses {
        if !seen_courses.insert(course.course_id.as_str()) {
            return Err(CorpusError::DuplicateCourse(course.course_id.clone()));
        }
        for class in &course.classes {
            if class.year == 0 {
                return Err(CorpusError::InvalidYear {
                    course_id: course.course_id.clone(),
                    class: class.class_name.clone(),
                });
            }
            if variant != CorpusVariant::Clear && class.objectives.trim().is_empty() {
                return Err(CorpusError::MissingObjectives {
                    course_id: course.course_id.clone(),
                    class: class.class_name.clone(),
                    variant,
                });
            }
        }

        docs.push(course_doc(course, "details", DocKind::Details, render_details(course)));
        let mut outline = render_outline(course);
        if variant == CorpusVariant::Emb && !course.classes.is_empty() {
            outline.push_str(&render_objectives_section(course));
        }
        docs.push(course_doc(course, "outline", DocKind::Outline, outline));
        if variant == CorpusVariant::Full {
            for (i, class) in course.classes.iter().enumerate() {
                docs.push(course_doc(
                    course,
                    &format!("objectives/{i}"),
                    DocKind::ClassObjectives,
                    render_class_objectives(course, class),
                ));
            }
        }
    }

    for doc in info_docs {
        if doc.section != Section::FutureStudents || doc.kind != DocKind::Info {
            return Err(CorpusError::NotAnInfoDoc(doc.doc_id.clone()));
        }
        if doc.text.trim().is_empty() {
            return Err(CorpusError::EmptyInfoDoc(doc.doc_id.clone()));
        }
        docs.push(doc.clone());
    }

    let mut ids = HashSet::with_capacity(docs.len());
    for doc in &docs {
        if !ids.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDoc(doc.doc_id.clone()));
        }
    }
    Ok(docs)
}

/// Document counts keyed by (section, kind).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub counts: BTreeMap<(Section, DocKind), usize>,
}

impl CorpusStats {
    pub fn section_total(&self, section: Section) -> usize {
        self.counts
            .iter()
            .filter(|((s, _), _)| *s == section)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, section: Section, kind: DocKind) -> usize {
        self.counts.get(&(section, kind)).copied().unwrap_or(0)
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:<16} {:>8}", "section", "kind", "count")?;
        for ((section, kind), n) in &self.counts {
            writeln!(f, "{:<16} {:<16} {:>8}", format!("{section:?}"), format!("{kind:?}"), n)?;
        }
        writeln!(f, "{:<33} {:>8}", "Education", self.section_total(Section::Education))?;
        writeln!(f, "{:<33} {:>8}", "FutureStudents", self.section_total(Section::FutureStudents))?;
        write!(f, "{:<33} {:>8}", "Total", self.total())
    }
}

pub fn corpus_stats(docs: &[RawDocument]) -> CorpusStats {
    let mut counts: BTreeMap<(Section, DocKind), usize> = [
        (Section::Education, DocKind::Details),
        (Section::Education, DocKind::Outline),
        (Section::Education, DocKind::ClassObjectives),
        (Section::FutureStudents, DocKind::Info),
    ]
    .into_iter()
    .map(|k| (k, 0))
    .collect();
    for doc in docs {
        *counts.entry((doc.section, doc.kind)).or_insert(0) += 1;
    }
    CorpusStats { counts }
}

pub fn read_courses(path: &Path) -> Result<Vec<CourseRecord>, CorpusError> {
    Ok(io::read_jsonl(path)?)
}

pub fn read_documents(path: &Path) -> Result<Vec<RawDocument>, CorpusError> {
    Ok(io::read_jsonl(path)?)
}

pub fn write_documents(path: &Path, docs: &[RawDocument]) -> Result<u64, CorpusError> {
    Ok(io::write_jsonl(path, docs)?)
}
