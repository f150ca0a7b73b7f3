//! Seeded synthetic university corpus for tests and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassRecord, CourseRecord, FineTuneExample, Level, Origin, RawDocument};

const SUBJECTS: &[&str] = &[
    "Ingegneria Informatica",
    "Chimica",
    "Fisica",
    "Matematica",
    "Economia Aziendale",
    "Giurisprudenza",
    "Medicina e Chirurgia",
    "Architettura",
    "Scienze Biologiche",
    "Lettere Moderne",
    "Psicologia",
    "Scienze Agrarie",
    "Ingegneria Civile",
    "Beni Culturali",
    "Scienze della Formazione",
];

const DEPARTMENTS: &[&str] = &[
    "Ingegneria",
    "Scienze e Tecnologie Biologiche Chimiche e Farmaceutiche",
    "Fisica e Chimica",
    "Matematica e Informatica",
    "Scienze Economiche Aziendali e Statistiche",
    "Giurisprudenza",
    "Medicina di Precisione",
    "Architettura",
    "Culture e Società",
    "Scienze Agrarie Alimentari e Forestali",
];

const TOPICS: &[&str] = &[
    "Analisi",
    "Algebra",
    "Programmazione",
    "Basi di Dati",
    "Reti",
    "Chimica Organica",
    "Meccanica",
    "Statistica",
    "Diritto Privato",
    "Microeconomia",
    "Anatomia",
    "Genetica",
    "Storia",
    "Letteratura",
    "Intelligenza Artificiale",
    "Sistemi Operativi",
    "Termodinamica",
    "Botanica",
];

const PROFESSORS: &[&str] = &[
    "Rossi", "Bianchi", "Russo", "Ferrara", "Esposito", "Romano", "Colombo", "Ricci",
    "Marino", "Greco", "Bruno", "Gallo", "Conti", "Costa", "Giordano",
];

const CITIES: &[&str] = &["Palermo", "Agrigento", "Caltanissetta", "Trapani"];

const INFO_TOPICS: &[&str] = &[
    "tasse universitarie",
    "borse di studio",
    "calendario accademico",
    "immatricolazione",
    "segreterie studenti",
    "residenze universitarie",
    "biblioteche",
    "mobilità internazionale",
    "servizi per la disabilità",
    "orientamento",
];

/// Spreads `total` classes over `courses` as evenly as possible.
pub fn distribute(total: usize, courses: usize) -> Vec<usize> {
    if courses == 0 {
        return Vec::new();
    }
    let base = total / courses;
    let extra = total % courses;
    (0..courses).map(|i| base + usize::from(i < extra)).collect()
}

/// One course per entry of `class_counts`, with that many classes.
pub fn courses(class_counts: &[usize], seed: u64) -> Vec<CourseRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    class_counts
        .iter()
        .enumerate()
        .map(|(i, &n_classes)| {
            let subject = SUBJECTS[i % SUBJECTS.len()];
            let level = if rng.gen_bool(0.5) {
                Level::Bachelor
            } else {
                Level::Master
            };
            let years = if level == Level::Bachelor { 3 } else { 2 };
            let city = CITIES.choose(&mut rng).unwrap();
            let curriculum = if rng.gen_bool(0.2) {
                format!("indirizzo {}", TOPICS.choose(&mut rng).unwrap())
            } else {
                String::new()
            };
            let name = format!("{subject} {}", i / SUBJECTS.len() + 1);
            let classes = (0..n_classes)
                .map(|k| {
                    let topic = TOPICS.choose(&mut rng).unwrap();
                    ClassRecord {
                        class_name: format!("{topic} {}", k + 1),
                        credits: [6, 9, 12][rng.gen_range(0..3)],
                        professor: PROFESSORS.choose(&mut rng).unwrap().to_string(),
                        period: if rng.gen_bool(0.5) {
                            "primo semestre".into()
                        } else {
                            "secondo semestre".into()
                        },
                        sector: format!("SSD-{:02}", rng.gen_range(1..40)),
                        year: 1 + (k as u32 % years),
                        objectives: format!(
                            "Lo studente acquisirà conoscenze di {} applicate a {}. \
                             Al termine del corso saprà risolvere problemi di {}.",
                            topic.to_lowercase(),
                            subject.to_lowercase(),
                            TOPICS.choose(&mut rng).unwrap().to_lowercase()
                        ),
                    }
                })
                .collect();
            CourseRecord {
                course_id: format!("course-{i:04}"),
                description: format!(
                    "Il corso di {name} ha sede a {city} e ha una durata di {years} anni. \
                     Forma laureati con una solida preparazione in {}. \
                     Gli sbocchi professionali includono attività di ricerca e impiego nel settore.",
                    subject.to_lowercase()
                ),
                name,
                level,
                department: DEPARTMENTS.choose(&mut rng).unwrap().to_string(),
                curriculum,
                classes,
            }
        })
        .collect()
}

pub fn info_docs(count: usize, seed: u64) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1f0);
    (0..count)
        .map(|i| {
            let topic = INFO_TOPICS[i % INFO_TOPICS.len()];
            let day = rng.gen_range(1..29);
            let mut doc = RawDocument::info(
                format!("info-{i:04}"),
                format!("{topic} {}", i / INFO_TOPICS.len() + 1),
                format!(
                    "Informazioni su {topic}. Le richieste si presentano entro il giorno {day} \
                     tramite il portale di ateneo. Per maggiori dettagli rivolgersi agli uffici competenti."
                ),
            );
            doc.source_url = format!("https://example.org/futuri-studenti/{i}");
            doc
        })
        .collect()
}

/// FAQ/manual pairs over the given info documents; the first `flagged`
/// pairs are marked validation-eligible.
pub fn faq_pairs(info: &[RawDocument], count: usize, flagged: usize, system_prompt: &str) -> Vec<FineTuneExample> {
    if info.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|i| {
            let doc = &info[i % info.len()];
            FineTuneExample {
                system_prompt: system_prompt.to_string(),
                question: format!("Parlami di {} (domanda {})", doc.title, i + 1),
                answer: doc.text.clone(),
                origin: if i % 3 == 0 { Origin::Manual } else { Origin::FaqExtracted },
                source_doc_id: doc.doc_id.clone(),
                course_id: None,
                validation_eligible: i < flagged,
            }
        })
        .collect()
}
