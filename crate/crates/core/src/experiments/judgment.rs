use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, MainLabel};
use crate::metrics::{macro_f1, MetricsReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentMode {
    LastKTokens,
    GoldRr,
    PredictedRr,
}

/// Text handed to the outcome classifier for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentInput {
    pub doc_id: String,
    pub mode: JudgmentMode,
    pub text: String,
    /// 1 = accepted, 0 = rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<u8>,
}

/// Where the role of each sentence comes from.
pub enum RrSource<'a> {
    Gold,
    /// doc_id → one predicted label per sentence.
    Predicted(&'a BTreeMap<String, Vec<MainLabel>>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub inputs: Vec<JudgmentInput>,
    /// Documents with no sentence carrying a wanted label.
    pub excluded: Vec<String>,
}

/// Concatenates, in document order, the sentences whose label is in
/// `wanted`. Documents with no such sentence are excluded and listed.
/// Outcomes are attached from `outcomes` when present.
pub fn extract_rr_for_judgment(
    docs: &[DocumentRecord],
    source: RrSource<'_>,
    wanted: &[MainLabel],
    outcomes: &BTreeMap<String, u8>,
) -> Result<Extraction> {
    let mode = match source {
        RrSource::Gold => JudgmentMode::GoldRr,
        RrSource::Predicted(_) => JudgmentMode::PredictedRr,
    };
    let mut out = Extraction::default();
    for doc in docs {
        let labels = match &source {
            RrSource::Gold => doc.main_labels()?,
            RrSource::Predicted(map) => {
                let labels = map
                    .get(&doc.doc_id)
                    .ok_or_else(|| Error::InvalidInput(format!("no predictions for {}", doc.doc_id)))?;
                if labels.len() != doc.len() {
                    return Err(Error::LengthMismatch {
                        left: labels.len(),
                        right: doc.len(),
                    });
                }
                labels.clone()
            }
        };
        let picked: Vec<&str> = doc
            .sentences
            .iter()
            .zip(&labels)
            .filter(|(_, l)| wanted.contains(l))
            .map(|(s, _)| s.text.as_str())
            .collect();
        if picked.is_empty() {
            out.excluded.push(doc.doc_id.clone());
            continue;
        }
        out.inputs.push(JudgmentInput {
            doc_id: doc.doc_id.clone(),
            mode,
            text: picked.join(" "),
            outcome: outcomes.get(&doc.doc_id).copied(),
        });
    }
    Ok(out)
}

/// The final `k` tokens of the document, where `tokenize` is the
/// downstream classifier's tokenizer. Tokens are re-joined with spaces.
pub fn last_k_tokens<F>(doc: &DocumentRecord, k: usize, tokenize: F) -> JudgmentInput
where
    F: Fn(&str) -> Vec<String>,
{
    let full = doc.texts().join(" ");
    let tokens = tokenize(&full);
    let start = tokens.len().saturating_sub(k);
    JudgmentInput {
        doc_id: doc.doc_id.clone(),
        mode: JudgmentMode::LastKTokens,
        text: tokens[start..].join(" "),
        outcome: None,
    }
}

/// Removes sentences that state the final decision, so the classifier
/// cannot read the outcome off the input.
#[derive(Debug, Clone)]
pub struct DecisionFilter {
    patterns: Vec<Regex>,
}

impl DecisionFilter {
    pub fn new(patterns: &[&str]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| {
                Regex::new(&format!("(?i){p}")).map_err(|e| Error::InvalidConfig(format!("decision pattern {p:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { patterns })
    }

    /// Common phrasings of allowed/dismissed orders.
    pub fn default_patterns() -> Self {
        Self::new(&[
            r"\b(appeal|petition|application)s?\s+(is|are|stands?)\s+(hereby\s+)?(allowed|dismissed|rejected)",
            r"\b(allowed|dismissed)\s+with(out)?\s+costs?\b",
            r"\bin\s+the\s+result\b",
        ])
        .expect("built-in patterns compile")
    }

    pub fn is_decision(&self, sentence: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(sentence))
    }

    /// A copy of `doc` without its decision sentences.
    pub fn strip(&self, doc: &DocumentRecord) -> DocumentRecord {
        let mut out = doc.clone();
        out.sentences.retain(|s| !self.is_decision(&s.text));
        for (i, s) in out.sentences.iter_mut().enumerate() {
            s.index = i;
        }
        out
    }
}

/// Binary outcome classifier: returns the predicted label (1 = accept)
/// and its score.
pub trait JudgmentClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<(u8, f64)>;
}

/// Always predicts the same label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub u8);

impl JudgmentClassifier for ConstantClassifier {
    fn classify(&self, _text: &str) -> Result<(u8, f64)> {
        Ok((self.0, 1.0))
    }
}

/// A classifier living in a child process. Speaks newline-delimited JSON
/// on its standard streams: requests `{"text": ...}`, responses
/// `{"label": 0|1, "score": float}`.
pub struct ProcessClassifier {
    io: Mutex<ClassifierIo>,
}

struct ClassifierIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

#[derive(Deserialize)]
struct Verdict {
    label: u8,
    score: f64,
}

impl ProcessClassifier {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Encoder(format!("cannot start classifier {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            io: Mutex::new(ClassifierIo { child, stdin, stdout }),
        })
    }
}

impl Drop for ProcessClassifier {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

impl JudgmentClassifier for ProcessClassifier {
    fn classify(&self, text: &str) -> Result<(u8, f64)> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| Error::Encoder("classifier process lock poisoned".into()))?;
        let request = serde_json::json!({ "text": text });
        writeln!(io.stdin, "{request}")
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Encoder(format!("write to classifier: {e}")))?;
        let mut line = String::new();
        let read = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Encoder(format!("read from classifier: {e}")))?;
        if read == 0 {
            return Err(Error::Encoder("classifier process closed its output".into()));
        }
        let v: Verdict =
            serde_json::from_str(&line).map_err(|e| Error::Encoder(format!("bad classifier response: {e}")))?;
        if v.label > 1 {
            return Err(Error::Encoder(format!("classifier returned label {}", v.label)));
        }
        Ok((v.label, v.score))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JudgmentOutcome {
    Completed { report: MetricsReport },
    Skipped { reason: String },
}

const OUTCOME_NAMES: [&str; 2] = ["reject", "accept"];

/// Macro F1 over accept/reject. A classifier that cannot be reached marks
/// the run as skipped; malformed inputs are still errors.
pub fn judgment_eval<C: JudgmentClassifier + ?Sized>(
    classifier: Result<&C>,
    inputs: &[JudgmentInput],
) -> Result<JudgmentOutcome> {
    let mut gold = Vec::with_capacity(inputs.len());
    for input in inputs {
        let o = input
            .outcome
            .ok_or_else(|| Error::InvalidInput(format!("{} has no gold outcome", input.doc_id)))?;
        if o > 1 {
            return Err(Error::InvalidInput(format!("{} has outcome {o}", input.doc_id)));
        }
        gold.push(OUTCOME_NAMES[o as usize]);
    }
    let classifier = match classifier {
        Ok(c) => c,
        Err(e) => return Ok(JudgmentOutcome::Skipped { reason: e.to_string() }),
    };
    let mut predicted = Vec::with_capacity(inputs.len());
    for input in inputs {
        match classifier.classify(&input.text) {
            Ok((label, _)) => predicted.push(OUTCOME_NAMES[label.min(1) as usize]),
            Err(Error::Encoder(reason)) => return Ok(JudgmentOutcome::Skipped { reason }),
            Err(e) => return Err(e),
        }
    }
    let report = macro_f1(&predicted, &gold, &OUTCOME_NAMES)?;
    Ok(JudgmentOutcome::Completed { report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, SentenceRecord};

    fn doc(id: &str, labels: &[MainLabel]) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            domain: Domain::It,
            sentences: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let mut s = SentenceRecord::new(i, format!("s{i}"));
                    s.gold_main = Some(l);
                    s
                })
                .collect(),
        }
    }

    const WANTED: [MainLabel; 2] = [MainLabel::Rod, MainLabel::Rpc];

    #[test]
    fn picks_wanted_sentences_in_order() {
        use MainLabel::*;
        let docs = vec![doc("a", &[Fac, Rod, Arg, Rpc]), doc("b", &[Fac, Arg]), doc("c", &[Rpc])];
        let ex = extract_rr_for_judgment(&docs, RrSource::Gold, &WANTED, &BTreeMap::new()).unwrap();
        assert_eq!(ex.inputs[0].text, "s1 s3");
        assert_eq!(ex.excluded, vec!["b".to_string()]);
        assert_eq!(ex.inputs.len() + ex.excluded.len(), docs.len());
    }

    #[test]
    fn perfect_predictions_match_gold() {
        use MainLabel::*;
        let docs = vec![doc("a", &[Fac, Rod, Arg, Rpc]), doc("b", &[Sta, Pre]), doc("c", &[Rod, Rod])];
        let perfect: BTreeMap<String, Vec<MainLabel>> =
            docs.iter().map(|d| (d.doc_id.clone(), d.main_labels().unwrap())).collect();
        let outcomes = BTreeMap::from([("a".to_string(), 1u8)]);
        let gold = extract_rr_for_judgment(&docs, RrSource::Gold, &WANTED, &outcomes).unwrap();
        let pred = extract_rr_for_judgment(&docs, RrSource::Predicted(&perfect), &WANTED, &outcomes).unwrap();
        assert_eq!(gold.excluded, pred.excluded);
        let payload = |e: &Extraction| e.inputs.iter().map(|i| (i.doc_id.clone(), i.text.clone(), i.outcome)).collect::<Vec<_>>();
        assert_eq!(payload(&gold), payload(&pred));
    }

    fn words(n: usize) -> DocumentRecord {
        let mut d = doc("w", &[MainLabel::Fac]);
        d.sentences[0].text = (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        d
    }

    fn ws(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn last_k_keeps_the_tail() {
        let short = last_k_tokens(&words(100), 512, ws);
        assert_eq!(ws(&short.text).len(), 100);
        let long = last_k_tokens(&words(1000), 512, ws);
        let toks = ws(&long.text);
        assert_eq!(toks.len(), 512);
        assert_eq!(toks[0], "t488");
        assert_eq!(toks[511], "t999");
    }

    #[test]
    fn constant_classifier_matches_closed_form() {
        // With p accepts among N documents, always answering "accept" scores
        // 2p/(N+p) on accept and 0 on reject, so the macro is p/(N+p).
        for (n, p) in [(84usize, 50usize), (10, 3), (7, 7)] {
            let inputs: Vec<JudgmentInput> = (0..n)
                .map(|i| JudgmentInput {
                    doc_id: format!("d{i}"),
                    mode: JudgmentMode::GoldRr,
                    text: String::new(),
                    outcome: Some((i < p) as u8),
                })
                .collect();
            let JudgmentOutcome::Completed { report } = judgment_eval(Ok(&ConstantClassifier(1)), &inputs).unwrap() else {
                panic!("expected a completed run");
            };
            let expected = if p == n { 1.0 } else { p as f64 / (n + p) as f64 };
            assert!((report.macro_f1 - expected).abs() < 1e-12, "{n} {p}");
        }
    }

    #[test]
    fn unavailable_classifier_is_skipped() {
        let inputs = vec![JudgmentInput {
            doc_id: "a".into(),
            mode: JudgmentMode::LastKTokens,
            text: "x".into(),
            outcome: Some(0),
        }];
        let missing = ProcessClassifier::spawn("/nonexistent/classifier", &[]);
        let out = judgment_eval(missing.as_ref().map_err(|e| Error::Encoder(e.to_string())), &inputs).unwrap();
        assert!(matches!(out, JudgmentOutcome::Skipped { .. }));
        let dead = ProcessClassifier::spawn("true", &[]).unwrap();
        let out = judgment_eval(Ok(&dead), &inputs).unwrap();
        assert!(matches!(out, JudgmentOutcome::Skipped { .. }));
    }

    #[test]
    fn process_classifier_roundtrip() {
        let script = r#"while read line; do echo '{"label": 1, "score": 0.9}'; done"#;
        let c = ProcessClassifier::spawn("sh", &["-c".into(), script.into()]).unwrap();
        assert_eq!(c.classify("anything").unwrap(), (1, 0.9));
    }

    #[test]
    fn decision_sentences_are_stripped() {
        let f = DecisionFilter::default_patterns();
        assert!(f.is_decision("The appeal is accordingly dismissed with costs."));
        assert!(f.is_decision("In the result, the petition stands allowed."));
        assert!(!f.is_decision("The assessee filed returns for the year."));
        let mut d = words(3);
        d.sentences.push(SentenceRecord::new(1, "Appeal is allowed."));
        assert_eq!(f.strip(&d).len(), 1);
    }
}
