use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use ragforge_core::corpus::{synthetic, DEFAULT_SYSTEM_PROMPT};
use ragforge_core::engine::{MockProvider, StepClock};
use ragforge_core::io::write_jsonl;
use ragforge_service::store::{FileSink, EVENTS_FILE};
use ragforge_service::{ChatService, QuestionCategory, SequentialIds};
use serde_json::Value;

fn ragforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ragforge"))
        .args(args)
        .env_remove("RAGFORGE_LLM_URL")
        .env_remove("RAGFORGE_EMBED_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let courses = synthetic::courses(&synthetic::distribute(30, 8), 3);
        let info = synthetic::info_docs(10, 3);
        write_jsonl(&dir.path().join("courses.jsonl"), &courses).unwrap();
        write_jsonl(&dir.path().join("info.jsonl"), &info).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn corpus(&self, variant: &str) -> PathBuf {
        let out = self.path(&format!("corpus-{variant}.jsonl"));
        let o = ragforge(&[
            "build-corpus",
            "--courses", p(&self.path("courses.jsonl")),
            "--info", p(&self.path("info.jsonl")),
            "--variant", variant,
            "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }

    fn index(&self) -> PathBuf {
        let corpus = self.corpus("clear");
        let out = self.path("clear.vidx");
        let o = ragforge(&[
            "build-index", "--corpus", p(&corpus), "--out", p(&out),
            "--chunk-size", "60", "--chunk-overlap", "10",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = ragforge(&[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&ragforge(&["frobnicate"])), 2);
    let o = ragforge(&["build-corpus", "--courses", "a", "--info", "b", "--variant", "clear"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--out"));
    assert_eq!(code(&ragforge(&["build-corpus", "--courses", "a", "--info", "b", "--variant", "bogus", "--out", "c"])), 2);
    assert_eq!(code(&ragforge(&["stats", "--log", "x", "--verbose"])), 2);
    assert_eq!(code(&ragforge(&["eval", "--providers", "extractive", "--out", "r.jsonl"])), 2);
    assert_eq!(code(&ragforge(&["--help"])), 0);
}

#[test]
fn operational_failures_exit_1() {
    let f = Fixture::new();
    let o = ragforge(&["stats", "--log", p(&f.path("missing.jsonl"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error:"));
    let o = ragforge(&["build-index", "--corpus", p(&f.path("missing.jsonl")), "--out", p(&f.path("x.vidx"))]);
    assert_eq!(code(&o), 1);
    assert!(!f.path("x.vidx").exists());
}

#[test]
fn corpus_variants_and_idempotence() {
    let f = Fixture::new();
    let clear = f.corpus("clear");
    let emb = f.corpus("emb");
    let full = f.corpus("full");
    assert_eq!(lines(&emb), lines(&clear));
    assert_eq!(lines(&clear), 2 * 8 + 10);
    assert_eq!(lines(&full), 2 * 8 + 30 + 10);

    let first = std::fs::read(&full).unwrap();
    f.corpus("full");
    assert_eq!(std::fs::read(&full).unwrap(), first);
}

#[test]
fn failed_build_leaves_previous_output_untouched() {
    let f = Fixture::new();
    let out = f.corpus("full");
    let before = std::fs::read(&out).unwrap();

    let mut courses: Vec<Value> = ragforge_core::io::read_jsonl(&f.path("courses.jsonl")).unwrap();
    courses[0]["classes"][0]["objectives"] = Value::String(String::new());
    write_jsonl(&f.path("courses.jsonl"), &courses).unwrap();
    let o = ragforge(&[
        "build-corpus",
        "--courses", p(&f.path("courses.jsonl")),
        "--info", p(&f.path("info.jsonl")),
        "--variant", "full",
        "--out", p(&out),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(std::fs::read(&out).unwrap(), before);
    let leftovers: Vec<_> = std::fs::read_dir(f.dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn index_outputs_are_byte_identical_across_runs() {
    let f = Fixture::new();
    let index = f.index();
    let snapshot = |path: &Path| {
        ["", ".chunks.jsonl", ".meta.json"]
            .map(|s| std::fs::read(format!("{}{s}", path.display())).unwrap())
    };
    let first = snapshot(&index);
    f.index();
    assert_eq!(snapshot(&index), first);
    let meta: Value = serde_json::from_slice(&first[2]).unwrap();
    assert_eq!(meta["dim"], 256);
    assert_eq!(meta["embedder"], "local");
}

fn write_script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{name}.jsonl"));
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn eval_with_two_mock_providers_writes_two_rows_per_golden_pair() {
    let f = Fixture::new();
    let index = f.index();
    let a = write_script(f.dir.path(), "alpha", "{\"contains\":\"tasse\",\"reply\":\"Le tasse si pagano online.\",\"sticky\":true}\n{\"reply\":\"Consulta il sito dell'ateneo.\",\"sticky\":true}\n");
    let b = write_script(f.dir.path(), "beta", "{\"reply\":\"Non lo so.\",\"sticky\":true}\n");
    let report = f.path("report.jsonl");
    let providers = format!("script:{},script:{}", p(&a), p(&b));
    let args = [
        "eval", "--index", p(&index), "--providers", &providers,
        "--judge", "scripted", "--max-new-tokens", "256", "--out", p(&report),
    ];
    let o = ragforge(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let golden = ragforge_core::eval::builtin_golden().len();
    let rows: Vec<Value> = ragforge_core::io::read_jsonl(&report).unwrap();
    assert_eq!(rows.len(), 2 * golden);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
    for q in 0..golden {
        assert_eq!(rows[q]["context_hash"], rows[golden + q]["context_hash"]);
    }
    let run: Value = serde_json::from_slice(&std::fs::read(format!("{}.run.json", report.display())).unwrap()).unwrap();
    assert_eq!(run["config"]["max_new_tokens"], 256);
    assert_eq!(run["config"]["providers"], serde_json::json!(["alpha", "beta"]));

    let first = std::fs::read(&report).unwrap();
    assert_eq!(code(&ragforge(&args)), 0);
    assert_eq!(std::fs::read(&report).unwrap(), first);
}

#[test]
fn eval_with_failing_provider_exits_1_but_keeps_the_report() {
    let f = Fixture::new();
    let index = f.index();
    let good = write_script(f.dir.path(), "good", "{\"reply\":\"Risposta.\",\"sticky\":true}\n");
    let down = write_script(f.dir.path(), "down", "{\"fail\":\"timeout\",\"sticky\":true}\n");
    let report = f.path("report.jsonl");
    let providers = format!("script:{},script:{}", p(&good), p(&down));
    let o = ragforge(&["eval", "--index", p(&index), "--providers", &providers, "--out", p(&report)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("incomplete"));
    let rows: Vec<Value> = ragforge_core::io::read_jsonl(&report).unwrap();
    assert_eq!(rows.iter().filter(|r| r["status"] == "failed").count(), 6);
    assert!(rows.iter().filter(|r| r["provider"] == "down").all(|r| r["bleu"].is_null()));
}

#[test]
fn chat_reads_questions_from_stdin() {
    let f = Fixture::new();
    let index = f.index();
    let run = || {
        let mut child = Command::new(env!("CARGO_BIN_EXE_ragforge"))
            .args(["chat", "--index", p(&index), "--profile", "condensed"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child
            .stdin
            .take()
            .unwrap()
            .write_all("Quali corsi ci sono?\n\nE le tasse?\n/exit\nignorata\n".as_bytes())
            .unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    };
    let first = run();
    assert_eq!(first.lines().filter(|l| l.starts_with('[')).count(), 2);
    assert_eq!(run(), first);
}

#[test]
fn export_finetune_with_validation_split() {
    let f = Fixture::new();
    let info = synthetic::info_docs(10, 3);
    let pairs = synthetic::faq_pairs(&info, 12, 4, DEFAULT_SYSTEM_PROMPT);
    let pairs_path = f.path("pairs.jsonl");
    write_jsonl(&pairs_path, &pairs).unwrap();
    let out = f.path("train.jsonl");
    let valid = f.path("valid.jsonl");
    let args = [
        "export-finetune", "--pairs", p(&pairs_path), "--out", p(&out),
        "--valid-out", p(&valid), "--policy", "sample", "--seed", "7",
    ];
    assert_eq!(code(&ragforge(&args)), 0);
    assert_eq!(lines(&out), 12);
    assert_eq!(lines(&valid), 4);
    let first: Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 3);
    assert_eq!(first["system"], DEFAULT_SYSTEM_PROMPT);

    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(code(&ragforge(&args)), 0);
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
    assert_eq!(code(&ragforge(&["export-finetune", "--pairs", p(&pairs_path), "--out", p(&out), "--seed", "3"])), 2);
}

#[test]
fn stats_reads_a_service_log() {
    let f = Fixture::new();
    let data = f.path("data");
    std::fs::create_dir_all(&data).unwrap();
    {
        let docs = synthetic::info_docs(4, 1);
        let chunks = ragforge_core::chunker::chunk_all(&docs, Default::default()).unwrap();
        let retriever = ragforge_core::embed::IndexRetriever::build(
            chunks,
            Arc::new(ragforge_core::embed::HashingEmbedder::default()),
        )
        .unwrap();
        let pipeline = ragforge_core::engine::RagPipeline::new(
            Arc::new(retriever),
            Arc::new(MockProvider::constant("mock", "Ok.")),
            Default::default(),
        )
        .unwrap();
        let svc = ChatService::new(
            pipeline,
            Vec::new(),
            Box::new(FileSink::open(&data.join(EVENTS_FILE), false).unwrap()),
            Box::new(SequentialIds::default()),
            Arc::new(StepClock::new(0, 5)),
        )
        .unwrap();
        let s = svc.create_session().unwrap();
        for (i, c) in [QuestionCategory::OffTopic, QuestionCategory::OffTopic, QuestionCategory::CoursesInformation]
            .into_iter()
            .enumerate()
        {
            svc.post_message(&s, "Ciao").unwrap();
            svc.tag_question(&s, i, c).unwrap();
        }
    }
    let o = ragforge(&["stats", "--log", p(&data), "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["total_questions"], 3);
    assert_eq!(stats["categories"]["OffTopic"], 2);
    let text = ragforge(&["stats", "--log", p(&data.join(EVENTS_FILE))]);
    assert_eq!(code(&text), 0);
    assert!(!text.stdout.is_empty());
}
