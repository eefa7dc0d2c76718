//! Raw judgment text → cleaned, sentence-segmented, unlabeled document.

use std::ops::Range;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::model::{DocumentRecord, Domain, SentenceRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Delete,
    Replace,
}

/// One cleaning directive, as stored in a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessRule {
    pub pattern: String,
    pub action: RuleAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
}

/// Ordered, compiled list of cleaning rules. Rules apply in file order.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<(PreprocessRule, Regex)>,
}

impl RuleSet {
    pub fn new(rules: Vec<PreprocessRule>) -> Result<Self> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let re = Regex::new(&rule.pattern).map_err(|e| {
                Error::InvalidConfig(format!("bad preprocessing pattern {:?}: {e}", rule.pattern))
            })?;
            if rule.action == RuleAction::Replace && rule.replacement.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "replace rule {:?} has no replacement",
                    rule.pattern
                )));
            }
            compiled.push((rule, re));
        }
        Ok(Self { rules: compiled })
    }

    pub fn empty() -> Self {
        Self { rules: Vec::new() }
    }

    /// Loads a JSON array of rule records.
    pub fn from_file(path: &Path) -> Result<Self> {
        let rules: Vec<PreprocessRule> = crate::util::read_json(path)?;
        Self::new(rules)
    }

    /// Defaults for Indian court judgments: header dates, party/judge
    /// banners and bracketed page markers.
    pub fn default_rules() -> Self {
        let rule = |pattern: &str| PreprocessRule {
            pattern: pattern.to_string(),
            action: RuleAction::Delete,
            replacement: None,
        };
        Self::new(vec![
            rule(r"(?i)\b(dated|date of judgment)\s*:?\s*\d{1,2}[./-]\d{1,2}[./-]\d{2,4}\.?"),
            rule(r"(?im)^\s*(appellant|respondent|petitioner)s?\s*:.*$"),
            rule(r"(?im)^\s*(bench|coram|judges?)\s*:.*$"),
            rule(r"\[\s*page\s*\d+\s*\]"),
            PreprocessRule {
                pattern: r"[ \t]+".into(),
                action: RuleAction::Replace,
                replacement: Some(" ".into()),
            },
        ])
        .expect("default rules compile")
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (rule, re) in &self.rules {
            let replacement = match rule.action {
                RuleAction::Delete => "",
                RuleAction::Replace => rule.replacement.as_deref().unwrap_or(""),
            };
            out = re.replace_all(&out, replacement).into_owned();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Sentence segmentation contract: returns ordered, non-overlapping byte
/// spans whose concatenation is exactly the input text.
pub trait SentenceSplitter {
    fn split(&self, text: &str) -> Vec<Range<usize>>;
}

/// Rule-based splitter on `.`, `?` and `!` followed by whitespace, with a
/// legal abbreviation list ("No.", "Sec.", "Rs.", "v.", ...).
#[derive(Debug, Clone)]
pub struct PunctuationSplitter {
    abbreviations: Vec<String>,
}

impl Default for PunctuationSplitter {
    fn default() -> Self {
        let abbreviations = [
            "no", "nos", "sec", "secs", "s", "ss", "rs", "v", "vs", "ltd", "pvt", "co", "corp",
            "dr", "mr", "mrs", "ms", "viz", "i.e", "e.g", "art", "arts", "cl", "para", "paras",
            "ors", "anr", "st", "addl", "asst", "govt", "dept", "j", "jj", "cj", "hon'ble",
            "sr", "jr", "m/s", "u/s", "w.e.f", "r/w", "itr", "scc", "air", "vol", "pp", "p", "ch",
        ];
        Self {
            abbreviations: abbreviations.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PunctuationSplitter {
    fn is_abbreviation(&self, word: &str) -> bool {
        let w = word
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if w.is_empty() {
            return false;
        }
        // single capital initials ("K. Ramaswamy")
        if w.chars().count() == 1 && word.chars().last().is_some_and(|c| c.is_uppercase()) {
            return true;
        }
        self.abbreviations.contains(&w)
    }
}

impl SentenceSplitter for PunctuationSplitter {
    fn split(&self, text: &str) -> Vec<Range<usize>> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut spans = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if matches!(c, '.' | '?' | '!') {
                let mut j = i + 1;
                while j < chars.len() && matches!(chars[j].1, '.' | '?' | '!' | '"' | '\'' | ')' | '”' | '’') {
                    j += 1;
                }
                let at_break = j >= chars.len() || chars[j].1.is_whitespace();
                if at_break {
                    let word_start = text[start..pos]
                        .rfind(char::is_whitespace)
                        .map(|k| start + k + 1)
                        .unwrap_or(start);
                    let word = &text[word_start..pos];
                    if c != '.' || !self.is_abbreviation(word) {
                        let end = if j < chars.len() { chars[j].0 } else { text.len() };
                        spans.push(start..end);
                        start = end;
                    }
                }
                i = j;
            } else {
                i += 1;
            }
        }
        if start < text.len() {
            spans.push(start..text.len());
        }
        spans
    }
}

/// Cleans `raw_text` with `rules`, segments it with `splitter`, and returns an
/// unlabeled document. Empty and whitespace-only segments are dropped.
pub fn ingest_raw(
    doc_id: &str,
    domain: Domain,
    raw_text: &str,
    rules: &RuleSet,
    splitter: &dyn SentenceSplitter,
) -> Result<DocumentRecord> {
    if raw_text.trim().is_empty() {
        return Err(Error::Ingestion {
            doc_id: doc_id.to_string(),
            reason: "raw text is empty".into(),
        });
    }
    let cleaned = rules.apply(raw_text);
    let sentences: Vec<SentenceRecord> = splitter
        .split(&cleaned)
        .into_iter()
        .map(|span| cleaned[span].split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, text)| SentenceRecord::new(i, text))
        .collect();
    if sentences.is_empty() {
        return Err(Error::Ingestion {
            doc_id: doc_id.to_string(),
            reason: "no sentences left after cleaning".into(),
        });
    }
    Ok(DocumentRecord {
        doc_id: doc_id.to_string(),
        domain,
        sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date_rule() -> RuleSet {
        RuleSet::new(vec![PreprocessRule {
            pattern: r"Dated \d{1,2}\.\d{1,2}\.\d{4}\.".into(),
            action: RuleAction::Delete,
            replacement: None,
        }])
        .unwrap()
    }

    #[test]
    fn date_rule_then_split() {
        let doc = ingest_raw(
            "d1",
            Domain::It,
            "Dated 12.3.2004. Leave granted. The appeal...",
            &date_rule(),
            &PunctuationSplitter::default(),
        )
        .unwrap();
        assert_eq!(doc.texts(), vec!["Leave granted.", "The appeal..."]);
        assert_eq!(doc.sentences[1].index, 1);
    }

    #[test]
    fn header_only_is_an_error() {
        let err = ingest_raw(
            "hdr",
            Domain::It,
            "Dated 12.3.2004.",
            &date_rule(),
            &PunctuationSplitter::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("hdr"));
    }

    #[test]
    fn abbreviations_do_not_split() {
        let text = "The appeal under Sec. 147 filed by M/s. ABC Pvt. Ltd. v. CIT is allowed. Costs follow.";
        let spans = PunctuationSplitter::default().split(text);
        let parts: Vec<&str> = spans.iter().map(|r| text[r.clone()].trim()).collect();
        assert_eq!(
            parts,
            vec![
                "The appeal under Sec. 147 filed by M/s. ABC Pvt. Ltd. v. CIT is allowed.",
                "Costs follow."
            ]
        );
    }

    #[test]
    fn spans_cover_text() {
        let text = "  One. Two?  \"Three!\" four (five.) six";
        let spans = PunctuationSplitter::default().split(text);
        let joined: String = spans.iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(joined, text);
        for w in spans.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn replace_rule_requires_replacement() {
        let bad = RuleSet::new(vec![PreprocessRule {
            pattern: "x".into(),
            action: RuleAction::Replace,
            replacement: None,
        }]);
        assert!(bad.is_err());
        assert!(!RuleSet::default_rules().is_empty());
    }
}
