use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ragforge_core::chunker::{chunk_all, ChunkParams};
use ragforge_core::corpus::{
    build_variant, corpus_stats, export_finetune, read_courses, read_documents, split_validation,
    write_documents, FineTuneExample,
};
use ragforge_core::embed::{
    build_index, read_chunks, write_chunks, EmbeddingProvider, IndexRetriever, Retriever, VectorIndex,
};
use ragforge_core::engine::{GenerationConfig, LlmProvider, RagPipeline, SystemClock};
use ragforge_core::eval::{
    builtin_golden, load_golden, run_comparison, EvalConfig, Judge, LexicalJudge, LlmJudge, RowStatus,
};
use ragforge_core::io::{read_jsonl, write_atomic};
use ragforge_core::remote::{Endpoint, RemoteLlm};
use ragforge_service::providers::{embedder_from_spec, llm_from_spec};
use ragforge_service::store::{state_from_file, EVENTS_FILE};
use ragforge_service::{ChatService, NullSink, SequentialIds, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::{
    BuildCorpusArgs, BuildIndexArgs, ChatArgs, Command, EmbedderArg, EvalArgs, ExportArgs, JudgeArg,
    ServeArgs, StatsArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildCorpus(a) => build_corpus(a),
        Command::BuildIndex(a) => build_index_cmd(a),
        Command::Chat(a) => chat(a),
        Command::Serve(a) => serve(a),
        Command::Eval(a) => eval(a),
        Command::ExportFinetune(a) => export(a),
        Command::Stats(a) => stats(a),
    }
}

fn build_corpus(a: BuildCorpusArgs) -> Result<()> {
    let courses = read_courses(&a.courses)?;
    let info = read_documents(&a.info)?;
    let docs = build_variant(&courses, &info, a.variant.into())?;
    write_documents(&a.out, &docs)?;
    let stats = corpus_stats(&docs);
    println!(
        "{} documents ({} courses, {} info) -> {}",
        stats.total(),
        courses.len(),
        info.len(),
        a.out.display()
    );
    Ok(())
}

/// Written next to an index as `<index>.meta.json`.
#[derive(Debug, Serialize, Deserialize)]
struct IndexMeta {
    embedder: String,
    dim: usize,
    chunk_size: usize,
    chunk_overlap: usize,
    documents: usize,
    chunks: usize,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn build_index_cmd(a: BuildIndexArgs) -> Result<()> {
    let params = ChunkParams::new(a.chunk_size, a.chunk_overlap)?;
    let docs = read_documents(&a.corpus)?;
    let chunks = chunk_all(&docs, params)?;
    let embedder = embedder_from_spec(a.provider.spec(), a.dim)?;
    let index = build_index(&chunks, embedder.as_ref(), 64)?;
    let meta = IndexMeta {
        embedder: a.provider.spec().to_string(),
        dim: index.dim(),
        chunk_size: params.chunk_size,
        chunk_overlap: params.overlap,
        documents: docs.len(),
        chunks: chunks.len(),
    };
    // Sidecars first so a readable index always has its chunks.
    write_chunks(&sidecar(&a.out, ".chunks.jsonl"), &chunks)?;
    write_atomic(&sidecar(&a.out, ".meta.json"), &serde_json::to_vec_pretty(&meta)?)?;
    index.save(&a.out)?;
    println!(
        "{} chunks from {} documents, dim {} -> {}",
        meta.chunks,
        meta.documents,
        meta.dim,
        a.out.display()
    );
    Ok(())
}

fn open_index(path: &Path) -> Result<(Arc<dyn Retriever>, Arc<dyn EmbeddingProvider>)> {
    let meta_path = sidecar(path, ".meta.json");
    let meta: IndexMeta = serde_json::from_slice(
        &std::fs::read(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
    )
    .with_context(|| format!("parsing {}", meta_path.display()))?;
    let embedder = embedder_from_spec(&meta.embedder, Some(meta.dim))?;
    let index = VectorIndex::load(path)?;
    let chunks = read_chunks(&sidecar(path, ".chunks.jsonl"))?;
    let retriever = IndexRetriever::new(index, chunks, embedder.clone())?;
    Ok((Arc::new(retriever), embedder))
}

fn chat(a: ChatArgs) -> Result<()> {
    let (retriever, _) = open_index(&a.index)?;
    let config = GenerationConfig {
        prompt_profile: a.profile.into(),
        sharper_profile: a.sharper,
        k: a.k,
        max_new_tokens: a.max_new_tokens,
        ..GenerationConfig::default()
    };
    let pipeline = RagPipeline::new(retriever, llm_from_spec(&a.llm)?, config)?;
    let service = ChatService::new(
        pipeline,
        Vec::new(),
        Box::new(NullSink),
        Box::new(SequentialIds::default()),
        Arc::new(SystemClock),
    )?;
    let session = service.create_session()?;

    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        if question == "/exit" {
            break;
        }
        match service.post_message(&session, question) {
            Ok(reply) => {
                writeln!(out, "{}", reply.answer)?;
                if !reply.sources.is_empty() {
                    writeln!(out, "[{}]", reply.sources.join(", "))?;
                }
            }
            Err(e) => writeln!(out, "! {e}")?,
        }
        out.flush()?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(&a.config)?;
    std::fs::create_dir_all(&config.data_dir)
        .with_context(|| format!("creating {}", config.data_dir.display()))?;
    let service = Arc::new(config.build_service()?);
    let addr = config.addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        ragforge_service::serve(listener, service, config.static_dir.clone()).await?;
        Ok(())
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let golden = match &a.golden {
        Some(path) => load_golden(path)?,
        None => builtin_golden(),
    };
    let (retriever, embedder): (Arc<dyn Retriever>, Arc<dyn EmbeddingProvider>) =
        match (&a.index, &a.corpus) {
            (Some(index), _) => open_index(index)?,
            (None, Some(corpus)) => {
                let docs = read_documents(corpus)?;
                let chunks = chunk_all(&docs, ChunkParams::default())?;
                let embedder = embedder_from_spec(EmbedderArg::Local.spec(), None)?;
                (Arc::new(IndexRetriever::build(chunks, embedder.clone())?), embedder)
            }
            (None, None) => bail!("one of --index or --corpus is required"),
        };
    let providers = a
        .providers
        .iter()
        .map(|spec| llm_from_spec(spec).with_context(|| format!("provider `{spec}`")))
        .collect::<Result<Vec<Arc<dyn LlmProvider>>>>()?;
    let judge: Box<dyn Judge> = match a.judge {
        JudgeArg::Scripted => Box::new(LexicalJudge::default()),
        JudgeArg::Remote => {
            let endpoint = Endpoint::llm_from_env(a.judge_model.clone())?;
            Box::new(LlmJudge::new(Arc::new(RemoteLlm::new(endpoint))))
        }
    };
    let mut config = EvalConfig {
        k: a.k,
        max_new_tokens: a.max_new_tokens,
        workers: a.workers,
        ..EvalConfig::default()
    };
    if a.sharper {
        config.template = ragforge_core::engine::PromptTemplate::sharper_custom();
    }
    let run = run_comparison(
        &providers,
        &golden,
        retriever.as_ref(),
        judge.as_ref(),
        embedder.as_ref(),
        &config,
    )?;
    run.write(&a.out)?;
    print!("{}", run.render_table());
    let incomplete = run.rows.iter().filter(|r| r.status != RowStatus::Ok).count();
    if incomplete > 0 {
        bail!(
            "{incomplete} of {} rows are incomplete; see {}",
            run.rows.len(),
            a.out.display()
        );
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let pairs: Vec<FineTuneExample> = read_jsonl(&a.pairs)?;
    let (train, valid) = match &a.valid_out {
        Some(_) => split_validation(&pairs, a.seed, a.policy.into())?,
        None => (pairs, Vec::new()),
    };
    export_finetune(&train, &a.out)?;
    println!("{} training examples -> {}", train.len(), a.out.display());
    if let Some(path) = &a.valid_out {
        export_finetune(&valid, path)?;
        println!("{} validation examples -> {}", valid.len(), path.display());
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let path = if a.log.is_dir() {
        a.log.join(EVENTS_FILE)
    } else {
        a.log.clone()
    };
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    let stats = state_from_file(&path)?.stats();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats.render());
    }
    Ok(())
}
