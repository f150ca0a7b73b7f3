//! One-shot multi-provider comparison over golden pairs. Contexts are
//! retrieved once per question and shared by every provider.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::golden::GoldenPair;
use super::judge::Judge;
use super::metrics::{bleu, rouge_l};
use super::ragas::{answer_correctness, context_relevancy, faithfulness, CorrectnessWeights};
use crate::embed::{EmbeddingProvider, RetrievalError, RetrievedChunk, Retriever};
use crate::engine::prompt::join_context;
use crate::engine::{Bindings, GenerationParams, LlmProvider, PromptTemplate, DEFAULT_K};
use crate::io::{self, IoError};

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 256;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub k: usize,
    pub max_new_tokens: u32,
    pub workers: usize,
    pub weights: CorrectnessWeights,
    pub template: PromptTemplate,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: DEFAULT_K,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            workers: 4,
            weights: CorrectnessWeights::default(),
            template: PromptTemplate::custom(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("at least one provider is required")]
    NoProviders,
    #[error("golden set is empty")]
    NoGolden,
    #[error("provider name `{0}` appears twice")]
    DuplicateProvider(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("retrieval failed for {question_id}: {source}")]
    Retrieval {
        question_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error("prompt rendering failed: {0}")]
    Prompt(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub k: usize,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub workers: usize,
    pub weights: CorrectnessWeights,
    pub providers: Vec<String>,
    pub judge: String,
    pub embedder: String,
    pub questions: usize,
    pub prompt_sha256: String,
}

/// Contexts fixed for one question, with per-chunk relevancy (None where
/// the judge failed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionContext {
    pub question_id: String,
    pub question: String,
    pub chunks: Vec<RetrievedChunk>,
    pub context_hash: String,
    pub context_relevancy: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScores {
    pub bleu: f64,
    pub rouge_l_p: f64,
    pub rouge_l_r: f64,
    pub rouge_l_f: f64,
    pub context_relevancy: Vec<Option<f64>>,
    pub faithfulness: Option<f64>,
    pub answer_correctness: Option<f64>,
}

impl MetricScores {
    fn fully_defined(&self) -> bool {
        self.faithfulness.is_some()
            && self.answer_correctness.is_some()
            && self.context_relevancy.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    /// Every metric has a value.
    Ok,
    /// The answer was produced but at least one metric is undefined.
    Partial,
    /// The provider failed; no metrics.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub provider: String,
    pub question_id: String,
    pub status: RowStatus,
    pub answer: Option<String>,
    pub error: Option<String>,
    pub scores: Option<MetricScores>,
    pub context_hash: String,
}

/// Flat line-delimited report record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub provider: String,
    pub question_id: String,
    pub bleu: Option<f64>,
    pub rouge_l_f: Option<f64>,
    pub context_relevancy: Vec<Option<f64>>,
    pub faithfulness: Option<f64>,
    pub answer_correctness: Option<f64>,
    pub status: RowStatus,
    pub context_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&ReportRow> for ReportRecord {
    fn from(r: &ReportRow) -> Self {
        let s = r.scores.as_ref();
        ReportRecord {
            provider: r.provider.clone(),
            question_id: r.question_id.clone(),
            bleu: s.map(|s| s.bleu),
            rouge_l_f: s.map(|s| s.rouge_l_f),
            context_relevancy: s.map(|s| s.context_relevancy.clone()).unwrap_or_default(),
            faithfulness: s.and_then(|s| s.faithfulness),
            answer_correctness: s.and_then(|s| s.answer_correctness),
            status: r.status,
            context_hash: r.context_hash.clone(),
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub config: ConfigSnapshot,
    pub contexts: Vec<QuestionContext>,
    /// Sorted by provider name, then question order.
    pub rows: Vec<ReportRow>,
}

/// Identifier of the `index`-th golden pair (0-based input).
pub fn question_id(index: usize) -> String {
    format!("q{}", index + 1)
}

/// SHA-256 over the ordered (chunk ref, text) pairs.
pub fn context_hash(chunks: &[RetrievedChunk]) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c.chunk_ref.as_bytes());
        h.update([0u8]);
        h.update(c.text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn run_comparison(
    providers: &[Arc<dyn LlmProvider>],
    golden: &[GoldenPair],
    retriever: &dyn Retriever,
    judge: &dyn Judge,
    embedder: &dyn EmbeddingProvider,
    config: &EvalConfig,
) -> Result<EvalRun, EvalError> {
    if providers.is_empty() {
        return Err(EvalError::NoProviders);
    }
    if golden.is_empty() {
        return Err(EvalError::NoGolden);
    }
    if config.k == 0 || config.workers == 0 || config.max_new_tokens == 0 {
        return Err(EvalError::Config(
            "k, workers and max_new_tokens must be positive".into(),
        ));
    }
    config
        .weights
        .validate()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let mut names = HashSet::new();
    for p in providers {
        if !names.insert(p.name()) {
            return Err(EvalError::DuplicateProvider(p.name().to_string()));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;

    let mut contexts = Vec::with_capacity(golden.len());
    for (i, pair) in golden.iter().enumerate() {
        let qid = question_id(i);
        let chunks = retriever
            .retrieve(&pair.question, config.k)
            .map_err(|source| EvalError::Retrieval {
                question_id: qid.clone(),
                source,
            })?;
        contexts.push(QuestionContext {
            context_hash: context_hash(&chunks),
            question_id: qid,
            question: pair.question.clone(),
            chunks,
            context_relevancy: Vec::new(),
        });
    }
    pool.install(|| {
        contexts.par_iter_mut().for_each(|ctx| {
            ctx.context_relevancy = ctx
                .chunks
                .iter()
                .map(|c| context_relevancy(&ctx.question, &c.text, judge).ok())
                .collect();
        })
    });

    let mut prompts = Vec::with_capacity(golden.len());
    for ctx in &contexts {
        let joined = join_context(&ctx.chunks);
        let prompt = config
            .template
            .render(&Bindings::new().question(&ctx.question).context(&joined))
            .map_err(|e| EvalError::Prompt(e.to_string()))?;
        prompts.push(prompt);
    }

    let params = GenerationParams {
        temperature: 0.0,
        max_new_tokens: Some(config.max_new_tokens),
    };
    let cells: Vec<(usize, usize)> = (0..providers.len())
        .flat_map(|p| (0..golden.len()).map(move |q| (p, q)))
        .collect();
    let mut rows: Vec<(usize, ReportRow)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, q)| {
                let provider = &providers[p];
                let ctx = &contexts[q];
                let row = score_cell(
                    provider.as_ref(),
                    &prompts[q],
                    &params,
                    &golden[q],
                    ctx,
                    judge,
                    embedder,
                    config.weights,
                );
                (q, row)
            })
            .collect()
    });
    rows.sort_by(|(qa, a), (qb, b)| a.provider.cmp(&b.provider).then(qa.cmp(qb)));

    let mut provider_names: Vec<String> = providers.iter().map(|p| p.name().to_string()).collect();
    provider_names.sort();
    Ok(EvalRun {
        config: ConfigSnapshot {
            k: config.k,
            max_new_tokens: config.max_new_tokens,
            temperature: params.temperature,
            workers: config.workers,
            weights: config.weights,
            providers: provider_names,
            judge: judge.name().to_string(),
            embedder: embedder.name().to_string(),
            questions: golden.len(),
            prompt_sha256: sha256_hex(config.template.body()),
        },
        contexts,
        rows: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn score_cell(
    provider: &dyn LlmProvider,
    prompt: &str,
    params: &GenerationParams,
    pair: &GoldenPair,
    ctx: &QuestionContext,
    judge: &dyn Judge,
    embedder: &dyn EmbeddingProvider,
    weights: CorrectnessWeights,
) -> ReportRow {
    let mut row = ReportRow {
        provider: provider.name().to_string(),
        question_id: ctx.question_id.clone(),
        status: RowStatus::Failed,
        answer: None,
        error: None,
        scores: None,
        context_hash: ctx.context_hash.clone(),
    };
    let answer = match provider.generate(prompt, params) {
        Ok(a) => a,
        Err(e) => {
            tracing::warn!(provider = provider.name(), question = %ctx.question_id, error = %e, "generation failed");
            row.error = Some(e.to_string());
            return row;
        }
    };
    let rouge = rouge_l(&answer, &pair.golden_answer);
    let texts: Vec<String> = ctx.chunks.iter().map(|c| c.text.clone()).collect();
    let mut errors = Vec::new();
    let faith = match faithfulness(&answer, &texts, judge) {
        Ok(v) => v,
        Err(e) => {
            errors.push(format!("faithfulness: {e}"));
            None
        }
    };
    let correctness = match answer_correctness(&answer, &pair.golden_answer, judge, embedder, weights) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("answer_correctness: {e}"));
            None
        }
    };
    let scores = MetricScores {
        bleu: bleu(&answer, &pair.golden_answer),
        rouge_l_p: rouge.precision,
        rouge_l_r: rouge.recall,
        rouge_l_f: rouge.f,
        context_relevancy: ctx.context_relevancy.clone(),
        faithfulness: faith,
        answer_correctness: correctness,
    };
    row.status = if scores.fully_defined() {
        RowStatus::Ok
    } else {
        RowStatus::Partial
    };
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row.scores = Some(scores);
    row.answer = Some(answer);
    row
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl EvalRun {
    pub fn failed_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Failed)
            .count()
    }

    pub fn records(&self) -> Vec<ReportRecord> {
        self.rows.iter().map(ReportRecord::from).collect()
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>, IoError> {
        io::to_jsonl(&self.records())
    }

    /// Writes the report and a `<path>.run.json` sidecar with the config
    /// snapshot and the shared contexts.
    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, &self.to_jsonl()?)?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".run.json");
        let snapshot = serde_json::to_vec_pretty(&serde_json::json!({
            "config": self.config,
            "contexts": self.contexts,
        }))?;
        io::write_atomic(Path::new(&sidecar), &snapshot)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<6} {:>8} {:>8} {:>8} {:>8} {:>8}  status",
            "provider", "q", "bleu", "rougeL", "ctxrel", "faith", "correct"
        );
        for r in &self.rows {
            let s = r.scores.as_ref();
            let ctx = s.and_then(|s| {
                let defined: Vec<f64> = s.context_relevancy.iter().flatten().copied().collect();
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            });
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::Partial => "partial",
                RowStatus::Failed => "failed",
            };
            let _ = writeln!(
                out,
                "{:<24} {:<6} {:>8} {:>8} {:>8} {:>8} {:>8}  {}",
                r.provider,
                r.question_id,
                fmt_opt(s.map(|s| s.bleu)),
                fmt_opt(s.map(|s| s.rouge_l_f)),
                fmt_opt(ctx),
                fmt_opt(s.and_then(|s| s.faithfulness)),
                fmt_opt(s.and_then(|s| s.answer_correctness)),
                status
            );
        }
        let _ = writeln!(
            out,
            "k={} max_new_tokens={} judge={} embedder={}",
            self.config.k, self.config.max_new_tokens, self.config.judge, self.config.embedder
        );
        out
    }
}
