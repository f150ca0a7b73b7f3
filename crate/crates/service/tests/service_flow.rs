mod common;

use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use proptest::prelude::*;
use ragforge_service::store::{load_events, state_from_file, Event, EVENTS_FILE};
use ragforge_service::{
    AnswerRating, EventSink, FeedbackInput, FileSink, QuestionCategory, RespondentRole,
    ServiceError,
};

fn feedback(rating: u8, answers: Vec<AnswerRating>) -> FeedbackInput {
    FeedbackInput {
        respondent_role: RespondentRole::UniversityStudent,
        overall_rating: rating,
        per_answer_ratings: answers,
        comment: Some("Molto utile".into()),
    }
}

/// create session → 2 messages → feedback → stats, as one JSON transcript.
fn scripted_run(dir: &std::path::Path) -> serde_json::Value {
    let llm = common::mock_llm();
    let svc = common::open(dir, llm.clone());
    let id = svc.create_session().unwrap();
    let r1 = svc.post_message(&id, "Quanto costano le tasse universitarie?").unwrap();
    let r2 = svc.post_message(&id, "E per il corso di Fisica?").unwrap();
    let fb = svc
        .post_feedback(&id, feedback(5, vec![AnswerRating::Excellent, AnswerRating::Good]))
        .unwrap();
    let stats = svc.stats();
    serde_json::json!({
        "session": id,
        "replies": [r1, r2],
        "feedback": fb,
        "stats": stats,
        "calls": llm.call_count(),
    })
}

#[test]
fn mock_stack_flow_is_deterministic() {
    let runs: Vec<(serde_json::Value, Vec<u8>)> = (0..3)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let transcript = scripted_run(dir.path());
            (transcript, std::fs::read(dir.path().join(EVENTS_FILE)).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
    let t = &runs[0].0;
    assert_eq!(t["calls"], 3, "1 call for the first turn, 2 for the second");
    assert_eq!(t["replies"][1]["turn"], 1);
    assert_eq!(t["stats"]["total_questions"], 2);
    assert_eq!(t["stats"]["feedback_count"], 1);
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    scripted_run(dir.path());
    let (before_stats, before_session, before_log) = {
        let svc = common::open(dir.path(), common::mock_llm());
        (svc.stats(), svc.session("s-000001").unwrap(), svc.question_log())
    };
    let svc = common::open(dir.path(), common::mock_llm());
    assert_eq!(svc.stats(), before_stats);
    assert_eq!(svc.session("s-000001").unwrap(), before_session);
    assert_eq!(svc.question_log(), before_log);
    assert_eq!(svc.session("s-000001").unwrap().turns().len(), 2);

    let fresh = svc.create_session().unwrap();
    assert_ne!(fresh, "s-000001");
    svc.post_message("s-000001", "E le borse di studio?").unwrap();
    assert_eq!(svc.session("s-000001").unwrap().turns().len(), 3);
}

#[test]
fn errors_map_to_service_errors() {
    let dir = tempfile::tempdir().unwrap();
    let svc = common::open(dir.path(), common::mock_llm());
    assert!(matches!(svc.post_message("nope", "ciao"), Err(ServiceError::SessionNotFound(_))));
    let id = svc.create_session().unwrap();
    assert!(matches!(svc.post_message(&id, "   "), Err(ServiceError::Validation(_))));
    assert!(matches!(svc.post_feedback(&id, feedback(6, vec![])), Err(ServiceError::Validation(_))));
    assert!(matches!(svc.post_feedback(&id, feedback(0, vec![])), Err(ServiceError::Validation(_))));
    assert!(matches!(
        svc.post_feedback(&id, feedback(3, vec![AnswerRating::Bad])),
        Err(ServiceError::Validation(_))
    ));
    assert!(matches!(
        svc.tag_question(&id, 0, QuestionCategory::OffTopic),
        Err(ServiceError::TurnNotFound { turn: 0, .. })
    ));
    assert_eq!(svc.stats().feedback_count, 0);
}

#[test]
fn provider_outage_is_reported_not_fabricated() {
    let dir = tempfile::tempdir().unwrap();
    let llm = Arc::new(
        ragforge_core::engine::MockProvider::builder()
            .always_fail(ragforge_core::engine::Matcher::Any, "503 from upstream")
            .build(),
    );
    let svc = common::open(dir.path(), llm);
    let id = svc.create_session().unwrap();
    assert!(matches!(svc.post_message(&id, "ciao"), Err(ServiceError::Degraded(_))));
    assert!(svc.session(&id).unwrap().turns().is_empty());
    assert_eq!(svc.stats().total_questions, 0);
}

#[test]
fn tagging_overwrites_and_keeps_totals() {
    let dir = tempfile::tempdir().unwrap();
    let svc = common::open(dir.path(), common::mock_llm());
    let id = svc.create_session().unwrap();
    svc.post_message(&id, "Come si pagano le tasse?").unwrap();
    svc.tag_question(&id, 0, QuestionCategory::GenericInformation).unwrap();
    svc.tag_question(&id, 0, QuestionCategory::TaxesAndScholarships).unwrap();
    let s = svc.stats();
    assert_eq!(s.categories[&QuestionCategory::TaxesAndScholarships], 1);
    assert_eq!(s.categories[&QuestionCategory::GenericInformation], 0);
    assert_eq!(s.histogram_total(), 1);
    assert_eq!(svc.question_log()[0].category, Some(QuestionCategory::TaxesAndScholarships));
}

/// 165 questions over sessions of two, each tagged into one of the seven
/// categories, then 31 feedback records.
#[test]
fn tagged_log_histogram_and_feedback_counts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = common::open(dir.path(), common::mock_llm());
    let plan = [38usize, 41, 17, 12, 21, 19, 17];
    assert_eq!(plan.iter().sum::<usize>(), 165);
    let categories: Vec<QuestionCategory> = QuestionCategory::ALL
        .iter()
        .zip(plan)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();

    let mut sessions = Vec::new();
    let mut session = String::new();
    for (i, &category) in categories.iter().enumerate() {
        if i % 2 == 0 {
            session = svc.create_session().unwrap();
            sessions.push(session.clone());
        }
        let reply = svc.post_message(&session, &format!("Domanda numero {i}")).unwrap();
        svc.tag_question(&session, reply.turn, category).unwrap();
    }
    for (i, s) in sessions.iter().take(31).enumerate() {
        let rating = if i < 2 { 2 } else { 4 + (i % 2) as u8 };
        svc.post_feedback(s, feedback(rating, vec![AnswerRating::Good])).unwrap();
    }

    let stats = svc.stats();
    assert_eq!(stats.total_questions, 165);
    assert_eq!(stats.untagged, 0);
    assert_eq!(stats.histogram_total(), 165);
    for (c, n) in QuestionCategory::ALL.iter().zip(plan) {
        assert_eq!(stats.categories[c], n);
    }
    assert_eq!(stats.feedback_count, 31);
    assert_eq!(stats.overall_ratings.values().sum::<usize>(), 31);
    assert_eq!(stats.overall_ratings[&2], 2);
    assert_eq!(state_from_file(&dir.path().join(EVENTS_FILE)).unwrap().stats(), stats);
}

/// Delegates to a file sink but can be told to fail, optionally after
/// writing a partial record as a crash mid-write would.
struct FaultySink {
    inner: FileSink,
    fail: Arc<AtomicBool>,
    torn: bool,
}

impl EventSink for FaultySink {
    fn append(&mut self, event: &Event) -> io::Result<()> {
        if self.fail.load(Ordering::SeqCst) {
            if self.torn {
                let line = serde_json::to_vec(event).unwrap();
                let mut f = std::fs::OpenOptions::new().append(true).open(self.inner.path())?;
                f.write_all(&line[..line.len() / 2])?;
            }
            return Err(io::Error::other("injected write failure"));
        }
        self.inner.append(event)
    }
}

fn faulty(dir: &std::path::Path, torn: bool) -> (ragforge_service::ChatService, Arc<AtomicBool>) {
    let fail = Arc::new(AtomicBool::new(false));
    let sink = FaultySink {
        inner: FileSink::open(&dir.join(EVENTS_FILE), false).unwrap(),
        fail: fail.clone(),
        torn,
    };
    (common::open_with_sink(dir, common::mock_llm(), Box::new(sink)), fail)
}

#[test]
fn failed_persist_never_reports_success() {
    let dir = tempfile::tempdir().unwrap();
    let (svc, fail) = faulty(dir.path(), false);
    let id = svc.create_session().unwrap();
    svc.post_message(&id, "Prima domanda").unwrap();

    fail.store(true, Ordering::SeqCst);
    assert!(matches!(svc.post_message(&id, "Seconda domanda"), Err(ServiceError::Persistence(_))));
    assert!(matches!(svc.post_feedback(&id, feedback(4, vec![])), Err(ServiceError::Persistence(_))));
    assert!(matches!(svc.create_session(), Err(ServiceError::Persistence(_))));
    assert_eq!(svc.session(&id).unwrap().turns().len(), 1);
    assert_eq!(svc.stats().total_questions, 1);
    assert_eq!(svc.stats().sessions, 1);

    fail.store(false, Ordering::SeqCst);
    let reply = svc.post_message(&id, "Seconda domanda").unwrap();
    assert_eq!(reply.turn, 1);
    drop(svc);
    let reopened = common::open(dir.path(), common::mock_llm());
    assert_eq!(reopened.session(&id).unwrap().turns().len(), 2);
}

#[test]
fn torn_write_is_recovered_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (svc, fail) = faulty(dir.path(), true);
    let id = svc.create_session().unwrap();
    svc.post_message(&id, "Prima domanda").unwrap();
    let acknowledged = svc.stats();
    fail.store(true, Ordering::SeqCst);
    assert!(svc.post_message(&id, "Seconda domanda").is_err());
    drop(svc);

    let events = load_events(&dir.path().join(EVENTS_FILE)).unwrap();
    assert_eq!(events.len(), 2);
    let reopened = common::open(dir.path(), common::mock_llm());
    assert_eq!(reopened.stats(), acknowledged);
    reopened.post_message(&id, "Seconda domanda").unwrap();
    assert_eq!(state_from_file(&dir.path().join(EVENTS_FILE)).unwrap().log.len(), 2);
}

#[derive(Debug, Clone)]
enum Op {
    Create,
    Message(usize),
    Feedback(usize, u8),
    Tag(usize, usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Create),
        (0usize..6).prop_map(Op::Message),
        (0usize..6, 0u8..8).prop_map(|(s, r)| Op::Feedback(s, r)),
        (0usize..6, 0usize..4, 0usize..7).prop_map(|(s, t, c)| Op::Tag(s, t, c)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn stats_match_store_cardinalities(ops in prop::collection::vec(op(), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let svc = common::open(dir.path(), common::mock_llm());
        let mut sessions: Vec<String> = Vec::new();
        let (mut questions, mut feedback_ok) = (0usize, 0usize);
        for op in ops {
            let before = svc.stats();
            match op {
                Op::Create => sessions.push(svc.create_session().unwrap()),
                Op::Message(s) if !sessions.is_empty() => {
                    let id = &sessions[s % sessions.len()];
                    svc.post_message(id, "Quali servizi offre l'ateneo?").unwrap();
                    questions += 1;
                }
                Op::Feedback(s, r) if !sessions.is_empty() => {
                    let id = &sessions[s % sessions.len()];
                    if svc.post_feedback(id, feedback(r, vec![])).is_ok() {
                        prop_assert!((1..=5).contains(&r));
                        feedback_ok += 1;
                    }
                }
                Op::Tag(s, t, c) if !sessions.is_empty() => {
                    let id = &sessions[s % sessions.len()];
                    let _ = svc.tag_question(id, t, QuestionCategory::ALL[c]);
                    prop_assert_eq!(svc.stats().histogram_total(), before.histogram_total());
                }
                _ => {}
            }
            let after = svc.stats();
            prop_assert!(after.total_questions >= before.total_questions);
            prop_assert!(after.feedback_count >= before.feedback_count);
        }
        let stats = svc.stats();
        prop_assert_eq!(stats.total_questions, questions);
        prop_assert_eq!(stats.histogram_total(), questions);
        prop_assert_eq!(stats.feedback_count, feedback_ok);
        prop_assert_eq!(stats.overall_ratings.values().sum::<usize>(), feedback_ok);
        prop_assert_eq!(stats.sessions, sessions.len());
        prop_assert_eq!(state_from_file(&dir.path().join(EVENTS_FILE)).unwrap().stats(), stats);
    }
}
