//! Reference metrics, judge-based metrics and the provider comparison
//! harness.

mod golden;
mod harness;
mod judge;
mod metrics;
mod ragas;

pub use golden::{builtin_golden, load_golden, parse_golden, GoldenError, GoldenPair};
pub use harness::{
    context_hash, question_id, run_comparison, ConfigSnapshot, EvalConfig, EvalError, EvalRun,
    MetricScores, QuestionContext, ReportRecord, ReportRow, RowStatus, DEFAULT_MAX_NEW_TOKENS,
};
pub use judge::{exact_classification, Classification, Judge, JudgeError, LexicalJudge, LlmJudge, ScriptedJudge};
pub use metrics::{bleu, bleu_tokens, lcs_len, rouge_l, rouge_l_tokens, RougeL, BLEU_MAX_N};
pub use ragas::{
    answer_correctness, context_relevancy, faithfulness, split_sentences, statement_f1,
    CorrectnessWeights, MetricError,
};
