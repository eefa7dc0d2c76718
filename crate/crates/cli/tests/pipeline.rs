use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rrseg::corpus::{save_corpus, DocumentRecord, Domain};
use rrseg::labelers::{synthetic_corpus, SyntheticConfig};

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rrseg"))
            .args(args)
            .env("RRSEG_RUNS_DIR", self.path("runs"))
            .env("RRSEG_CACHE_DIR", self.path("cache"))
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    /// Runs a command that must succeed and parses its last stdout line.
    fn ok(&self, args: &[&str]) -> serde_json::Value {
        let out = self.run(args);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(
            out.status.success(),
            "{args:?} failed: {}\n{stdout}",
            String::from_utf8_lossy(&out.stderr)
        );
        serde_json::from_str(stdout.lines().last().unwrap_or("null")).unwrap_or(serde_json::Value::Null)
    }

    /// Runs a command that must fail with `code`; returns its diagnostic.
    fn fails(&self, args: &[&str], code: i32) -> serde_json::Value {
        let out = self.run(args);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let stderr = String::from_utf8_lossy(&out.stderr);
        let line = stderr.lines().last().expect("a diagnostic line");
        let diag: serde_json::Value = serde_json::from_str(line).expect("diagnostic is JSON");
        assert_eq!(diag["exit_code"], code);
        diag
    }
}

fn synthetic(prefix: &str, docs: usize, seed: u64, domain: Domain) -> Vec<DocumentRecord> {
    let config = SyntheticConfig {
        docs,
        min_sentences: 6,
        max_sentences: 12,
        seed,
        id_prefix: prefix.into(),
        ..SyntheticConfig::default()
    };
    let mut docs = synthetic_corpus(&config);
    for d in &mut docs {
        d.domain = domain;
    }
    docs
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let env = Env::new();
    let corpus = env.path("it.jsonl");
    save_corpus(&corpus, &synthetic("it", 14, 0, Domain::It)).unwrap();
    let unlabeled = env.path("unlabeled.jsonl");
    save_corpus(&unlabeled, &synthetic("un", 6, 9, Domain::It)).unwrap();

    let out = env.run(&["stats", "--corpus", p(&corpus)]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success());
    assert!(table.contains("same-label neighbours"));
    assert!(table.lines().nth(1).unwrap().starts_with("AR"));

    let split = env.path("split.json");
    let s = env.ok(&["split", "--corpus", p(&corpus), "--ratios", "0.6,0.2,0.2", "--seed", "1", "--out", p(&split)]);
    assert_eq!(s["train"].as_u64().unwrap() + s["val"].as_u64().unwrap() + s["test"].as_u64().unwrap(), 14);

    let common = ["--corpus", p(&corpus), "--split", p(&split), "--encoder", "hashing:32"];
    let trained = env.ok(
        &[&["train", "--variant", "mtl", "--lambda", "0.6", "--epochs", "3", "--batch-size", "4", "--seeds", "0,1"][..], &common[..]]
            .concat(),
    );
    let run = PathBuf::from(trained["run"].as_str().unwrap());
    assert!(run.starts_with(env.path("runs")));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "train");
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
    assert!(run.join("seed-0/weights.bin").is_file() && run.join("seed-1/weights.bin").is_file());
    assert!(trained["val"]["mean"].is_number());

    let preds = env.path("preds.jsonl");
    let out = env.run(&["evaluate", "--run", p(&run), "--predictions", p(&preds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels: Vec<String> = csv_rows(&run.join("label_wise.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(labels, ["AR", "FAC", "PR", "STA", "RLC", "RPC", "ROD", "macro"]);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), s["test"].as_u64().unwrap() as usize);
    let all_preds = env.path("all_preds.jsonl");
    let out = env.run(&["evaluate", "--run", p(&run), "--all", "--predictions", p(&all_preds), "--out", p(&env.path("eval-all"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let sweep = env.ok(
        &[&["sweep-lambda", "--variant", "mtl", "--grid", "0.1:0.9:0.1", "--epochs", "1", "--batch-size", "8"][..], &common[..]]
            .concat(),
    );
    let sweep_dir = PathBuf::from(sweep["run"].as_str().unwrap());
    let rows = csv_rows(&sweep_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[2][0], "0.3");
    assert!(sweep_dir.join("sweep.json").is_file());

    let lsp = env.ok(&[
        "train-lsp", "--corpus", p(&corpus), "--split", p(&split), "--model", "siamese", "--encoder", "hashing:32",
        "--epochs", "2",
    ]);
    let shift_model = PathBuf::from(lsp["run"].as_str().unwrap()).join("model");
    let composed = env.ok(
        &[
            &["train", "--variant", "lsp_bilstm_crf", "--epochs", "2", "--batch-size", "4"][..],
            &common[..],
            &["--shift-model", p(&shift_model), "--shift-encoder", "hashing:32"][..],
        ]
        .concat(),
    );
    assert!(composed["val"]["mean"].is_number());
    let embedded = env.ok(&["shift-embed", "--corpus", p(&corpus), "--shift-model", p(&shift_model), "--shift-encoder", "hashing:32"]);
    assert_eq!(embedded["documents"], 14);

    let distilled = env.ok(&[
        "distill", "--teacher-run", p(&run), "--unlabeled", p(&unlabeled), "--iterations", "1", "--per-iteration", "3",
    ]);
    let distill_dir = PathBuf::from(distilled["run"].as_str().unwrap());
    assert!(distill_dir.join("distill_log.json").is_file());
    assert_eq!(distilled["iterations"].as_array().unwrap().len(), 1);

    let outcomes = env.path("outcomes.json");
    let ids: Vec<String> = synthetic("it", 14, 0, Domain::It).iter().map(|d| d.doc_id.clone()).collect();
    let map: serde_json::Map<String, serde_json::Value> =
        ids.iter().enumerate().map(|(i, id)| (id.clone(), serde_json::json!(i % 2))).collect();
    std::fs::write(&outcomes, serde_json::Value::Object(map).to_string()).unwrap();
    let gold_inputs = env.path("gold.jsonl");
    let g = env.ok(&["extract-rr", "--corpus", p(&corpus), "--outcomes", p(&outcomes), "--out", p(&gold_inputs)]);
    assert_eq!(g["included"].as_u64().unwrap() + g["excluded"].as_u64().unwrap(), 14);
    let test_corpus_inputs = env.path("pred.jsonl");
    env.ok(&[
        "extract-rr", "--corpus", p(&corpus), "--source", "predicted", "--predictions", p(&all_preds), "--outcomes",
        p(&outcomes), "--exclude", p(&env.path("gold.excluded.json")), "--out", p(&test_corpus_inputs),
    ]);
    let last = env.path("last.jsonl");
    env.ok(&["extract-rr", "--corpus", p(&corpus), "--source", "last-k", "--k", "20", "--outcomes", p(&outcomes), "--out", p(&last)]);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&last).unwrap().lines().next().unwrap()).unwrap();
    assert!(first["text"].as_str().unwrap().split_whitespace().count() <= 20);

    let script = r#"while read line; do echo '{"label": 1, "score": 0.8}'; done"#;
    let judged = env.ok(&["judge", "--inputs", p(&gold_inputs), "--classifier", "sh", "--classifier-arg=-c", "--classifier-arg", script]);
    assert_eq!(judged["status"], "completed");
    let skipped = env.ok(&["judge", "--inputs", p(&gold_inputs), "--classifier", "/nonexistent/judge"]);
    assert_eq!(skipped["status"], "skipped");

    let report = env.ok(&["report"]);
    assert!(report["runs"].as_u64().unwrap() >= 5);
    let reports = env.path("runs/reports");
    assert_eq!(csv_rows(&reports.join("labelers.csv")).len(), 2);
    assert_eq!(csv_rows(&reports.join("label_wise.csv")).len(), 8);
    assert_eq!(csv_rows(&reports.join("shift_models.csv")).len(), 1);
    assert_eq!(csv_rows(&reports.join("distillation.csv")).len(), 1);
}

#[test]
fn transfer_matrix_with_mapped_g() {
    let env = Env::new();
    let it = env.path("it.jsonl");
    let cl = env.path("cl.jsonl");
    save_corpus(&it, &synthetic("it", 10, 1, Domain::It)).unwrap();
    save_corpus(&cl, &synthetic("cl", 10, 2, Domain::Cl)).unwrap();
    let g = env.path("g.jsonl");
    let lines: Vec<String> = synthetic("g", 10, 3, Domain::G)
        .iter()
        .map(|d| {
            let sentences: Vec<_> = d
                .sentences
                .iter()
                .map(|s| serde_json::json!({"text": s.text, "label": format!("L-{}", s.main_label().unwrap())}))
                .collect();
            serde_json::json!({"doc_id": d.doc_id, "sentences": sentences}).to_string()
        })
        .collect();
    std::fs::write(&g, lines.join("\n")).unwrap();
    let mapping = env.path("g_map.json");
    let pairs: serde_json::Map<String, serde_json::Value> = ["FAC", "ARG", "PRE", "ROD", "RPC", "RLC", "STA"]
        .iter()
        .map(|c| (format!("L-{c}"), serde_json::json!(c)))
        .collect();
    std::fs::write(&mapping, serde_json::Value::Object(pairs).to_string()).unwrap();

    let base = [
        "transfer", "--it", p(&it), "--cl", p(&cl), "--g", p(&g), "--encoder", "hashing:32", "--variant", "bilstm_crf",
        "--epochs", "2", "--batch-size", "4", "--cells", "G:G,G:CL,G:IT,IT+CL:G",
    ];
    let diag = env.fails(&base, 2);
    assert!(diag["message"].as_str().unwrap().contains("mapping"));

    let out = env.ok(&[&base[..], &["--g-mapping", p(&mapping)][..]].concat());
    let table = out["table"].as_array().unwrap();
    assert_eq!(table.len(), 4);
    assert_eq!(table[0]["delta_g"], 0.0);
    assert!(table[3]["delta_g"].is_null());
    let run = PathBuf::from(out["run"].as_str().unwrap());
    let rows = csv_rows(&run.join("transfer.csv"));
    assert_eq!(rows[1][0..2], ["G".to_string(), "CL".to_string()]);
}

#[test]
fn failures_exit_with_category_codes() {
    let env = Env::new();
    let diag = env.fails(&["frobnicate"], 2);
    assert_eq!(diag["kind"], "config");

    let config = env.path("bad.toml");
    std::fs::write(&config, "[paths]\nrunz_dir = \"x\"\n").unwrap();
    env.fails(&["--config", p(&config), "stats", "--corpus", "x.jsonl"], 2);

    let corpus = env.path("broken.jsonl");
    std::fs::write(&corpus, "{\"doc_id\": \"a\", \"domain\": \"IT\", \"sentences\": 3}\n").unwrap();
    let diag = env.fails(&["stats", "--corpus", p(&corpus)], 3);
    assert_eq!(diag["kind"], "data");

    let missing = env.fails(&["stats", "--corpus", "nowhere.jsonl"], 3);
    let message = missing["message"].as_str().unwrap();
    assert_eq!(message.matches("os error").count(), 1, "{message}");

    let good = env.path("c.jsonl");
    save_corpus(&good, &synthetic("c", 6, 0, Domain::It)).unwrap();
    env.fails(&["train", "--corpus", p(&good), "--encoder", "hashing:0"], 2);
    env.fails(&["train", "--corpus", p(&good), "--encoder", "hashing:8", "--variant", "lsp_bilstm_crf"], 2);
    env.fails(
        &["sweep-lambda", "--corpus", p(&good), "--encoder", "hashing:8", "--variant", "bilstm_crf"],
        2,
    );
    let enc = env.fails(&["encode", "--corpus", p(&good), "--encoder", "missing"], 2);
    assert!(enc["message"].as_str().unwrap().contains("missing"));
}

#[test]
fn config_registry_names_encoders_and_models() {
    let env = Env::new();
    let corpus = env.path("c.jsonl");
    save_corpus(&corpus, &synthetic("c", 10, 4, Domain::It)).unwrap();
    let config = env.path("pipeline.toml");
    std::fs::write(
        &config,
        format!(
            "[paths]\ncorpus = {:?}\nruns_dir = \"ignored-because-env-wins\"\n\n[encoders.small]\nkind = \"hashing\"\ndim = 16\n\n\
             [models.quick]\nvariant = \"bilstm_crf\"\ninput_dim = 16\nlearning_rate = 0.01\nbatch_size = 4\nepochs = 2\n",
            corpus.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = env.ok(&["--config", p(&config), "--jobs", "2", "train", "--encoder", "small", "--model", "quick"]);
    let run = PathBuf::from(out["run"].as_str().unwrap());
    assert!(run.starts_with(env.path("runs")));
    let encoded = env.ok(&["--config", p(&config), "encode", "--corpus", p(&corpus), "--encoder", "small"]);
    assert_eq!(encoded["dim"], 16);
    assert_eq!(encoded["encoded"], 0, "train already filled the cache");
}

fn webanno(rows: &[(&str, &str)]) -> String {
    let mut out = "#FORMAT=WebAnno TSV 3.2\n#T_SP=webanno.custom.RhetoricalRole|primary|secondary|tertiary\n\n\n".to_string();
    let mut offset = 0;
    for (s, (text, primary)) in rows.iter().enumerate() {
        out.push_str(&format!("#Text={text}\n"));
        for (t, tok) in text.split(' ').enumerate() {
            let end = offset + tok.len();
            let label = if t == 0 { *primary } else { "_" };
            out.push_str(&format!("{}-{}\t{offset}-{end}\t{tok}\t{label}\t_\t_\n", s + 1, t + 1));
            offset = end + 1;
        }
        out.push('\n');
    }
    out
}

#[test]
fn annotation_exports_become_a_labelled_corpus() {
    let env = Env::new();
    let exports = env.path("exports");
    let text = ["Leave granted .", "The facts are these .", "Section 3 reads as follows .", "Appeal dismissed ."];
    let votes = [["NON", "FAC", "FAC", "RPC"], ["NON", "FAC", "ARG-P", "RPC"], ["NON", "ARG-R", "PRE-R", "RPC"]];
    for doc in ["d1", "d2"] {
        std::fs::create_dir_all(exports.join(doc)).unwrap();
        for (a, v) in votes.iter().enumerate() {
            let rows: Vec<(&str, &str)> = text.iter().copied().zip(v.iter().copied()).collect();
            std::fs::write(exports.join(doc).join(format!("A{}.tsv", a + 1)), webanno(&rows)).unwrap();
        }
    }
    let raw = env.path("raw.jsonl");
    let imported = env.ok(&["import", "--input", p(&exports), "--domain", "IT", "--out", p(&raw)]);
    assert_eq!(imported["documents"], 2);

    let adjudicated = env.path("adjudicated.jsonl");
    let first = env.ok(&["adjudicate", "--corpus", p(&raw), "--out", p(&adjudicated)]);
    assert_eq!(first["unresolved"]["d1"], serde_json::json!([2]));

    let overrides = env.path("overrides.json");
    std::fs::write(&overrides, r#"{"d1": {"2": "STA"}, "d2": {"2": "PRE-O"}}"#).unwrap();
    let second = env.ok(&["adjudicate", "--corpus", p(&raw), "--overrides", p(&overrides), "--out", p(&adjudicated)]);
    assert!(second["unresolved"].as_object().unwrap().is_empty());

    let reduced = env.path("reduced.jsonl");
    let r = env.ok(&["reduce", "--corpus", p(&adjudicated), "--out", p(&reduced)]);
    assert_eq!(r["documents"], 2);
    assert_eq!(r["dropped_sentences"], 2);
    let docs = rrseg::corpus::load_corpus(&reduced).unwrap();
    let labels: Vec<String> = docs[0].sentences.iter().map(|s| s.main_label().unwrap().to_string()).collect();
    assert_eq!(labels, ["FAC", "STA", "RPC"]);

    let broken = env.path("broken");
    std::fs::create_dir_all(broken.join("d1")).unwrap();
    std::fs::write(broken.join("d1/A1.tsv"), webanno(&[("Leave granted .", "FACT")])).unwrap();
    let diag = env.fails(&["import", "--input", p(&broken), "--domain", "IT", "--out", p(&env.path("x.jsonl"))], 3);
    assert!(diag["message"].as_str().unwrap().contains("FACT"));
}
