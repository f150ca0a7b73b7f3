#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use ragforge_core::chunker::{chunk_all, ChunkParams};
use ragforge_core::corpus::{build_variant, synthetic, CorpusVariant};
use ragforge_core::embed::{HashingEmbedder, IndexRetriever, Retriever};
use ragforge_core::engine::{GenerationConfig, Matcher, MockProvider, RagPipeline, StepClock};
use ragforge_service::store::{load_events, FileSink, EVENTS_FILE};
use ragforge_service::{ChatService, EventSink, SequentialIds};

pub fn retriever() -> Arc<dyn Retriever> {
    let courses = synthetic::courses(&synthetic::distribute(24, 6), 11);
    let info = synthetic::info_docs(8, 11);
    let docs = build_variant(&courses, &info, CorpusVariant::Clear).unwrap();
    let chunks = chunk_all(&docs, ChunkParams::new(40, 8).unwrap()).unwrap();
    Arc::new(IndexRetriever::build(chunks, Arc::new(HashingEmbedder::default())).unwrap())
}

/// Condensation calls get a fixed rewrite; answer calls echo the context.
pub fn mock_llm() -> Arc<MockProvider> {
    Arc::new(
        MockProvider::builder()
            .name("mock")
            .always(Matcher::Contains("Domanda singola".into()), "Quali sono le tasse per il corso?")
            .always_echo_after(Matcher::Any, "Documenti: ")
            .build(),
    )
}

pub fn pipeline(llm: Arc<MockProvider>) -> RagPipeline {
    RagPipeline::new(retriever(), llm, GenerationConfig::default())
        .unwrap()
        .with_clock(Arc::new(StepClock::new(1_700_000_000_000, 7)))
}

pub fn open_with_sink(dir: &Path, llm: Arc<MockProvider>, sink: Box<dyn EventSink>) -> ChatService {
    let events = load_events(&dir.join(EVENTS_FILE)).unwrap();
    ChatService::new(
        pipeline(llm),
        events,
        sink,
        Box::new(SequentialIds::default()),
        Arc::new(StepClock::new(1_700_000_000_000, 7)),
    )
    .unwrap()
}

/// Service persisting to `dir`, deterministic ids and clock.
pub fn open(dir: &Path, llm: Arc<MockProvider>) -> ChatService {
    let sink = FileSink::open(&dir.join(EVENTS_FILE), false).unwrap();
    open_with_sink(dir, llm, Box::new(sink))
}
