//! Import of WebAnno TSV v3 exports (one file per annotator).
//!
//! The rhetorical-role layer is the span layer that carries a feature named
//! `primary` (optionally `secondary` and `tertiary`). A sentence takes the
//! first non-empty value found on any of its tokens.

use super::model::{AnnotationCell, DocumentRecord, Domain, RhetoricalRole, SentenceRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Columns {
    primary: usize,
    secondary: Option<usize>,
    tertiary: Option<usize>,
}

#[derive(Debug, Clone)]
struct ParsedSentence {
    text: String,
    primary: Option<(RhetoricalRole, usize)>,
    secondary: Option<RhetoricalRole>,
    tertiary: Option<RhetoricalRole>,
}

fn locate_columns(header_lines: &[&str]) -> Option<Columns> {
    let mut next_col = 3;
    for line in header_lines {
        let Some(rest) = line
            .strip_prefix("#T_SP=")
            .or_else(|| line.strip_prefix("#T_CH="))
            .or_else(|| line.strip_prefix("#T_RL="))
        else {
            continue;
        };
        let mut parts = rest.split('|');
        let _layer = parts.next();
        let features: Vec<String> = parts.map(|f| f.to_ascii_lowercase()).collect();
        let find = |name: &str| features.iter().position(|f| f == name).map(|p| next_col + p);
        if let Some(primary) = find("primary") {
            return Some(Columns {
                primary,
                secondary: find("secondary"),
                tertiary: find("tertiary"),
            });
        }
        next_col += features.len();
    }
    None
}

fn clean_value(raw: &str) -> Option<&str> {
    let first = raw.split('|').next()?;
    let v = match first.find('[') {
        Some(p) => &first[..p],
        None => first,
    };
    match v {
        "" | "_" | "*" => None,
        other => Some(other),
    }
}

fn parse_role(value: &str, doc: &str, line: usize) -> Result<RhetoricalRole> {
    value.parse().map_err(|_| Error::UnknownLabel {
        doc: doc.to_string(),
        line,
        code: value.to_string(),
    })
}

fn parse_export(doc_id: &str, tsv: &str) -> Result<Vec<ParsedSentence>> {
    let lines: Vec<&str> = tsv.lines().collect();
    let headers: Vec<&str> = lines.iter().copied().filter(|l| l.starts_with("#T_")).collect();
    let cols = locate_columns(&headers).ok_or_else(|| Error::Parse {
        context: format!("WebAnno export for {doc_id}"),
        message: "no span layer with a `primary` feature".into(),
    })?;
    let mut sentences: Vec<ParsedSentence> = Vec::new();
    let mut in_sentence = false;
    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        if let Some(text) = line.strip_prefix("#Text=") {
            if in_sentence {
                let last = sentences.last_mut().expect("in_sentence implies one sentence");
                last.text.push(' ');
                last.text.push_str(text.trim());
            } else {
                sentences.push(ParsedSentence {
                    text: text.trim().to_string(),
                    primary: None,
                    secondary: None,
                    tertiary: None,
                });
                in_sentence = true;
            }
            continue;
        }
        if line.trim().is_empty() {
            in_sentence = false;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(current) = sentences.last_mut() else {
            return Err(Error::Parse {
                context: format!("{doc_id}:{lineno}"),
                message: "token row before any #Text line".into(),
            });
        };
        in_sentence = false;
        let get = |c: usize| fields.get(c).copied().and_then(clean_value);
        if current.primary.is_none() {
            if let Some(v) = get(cols.primary) {
                current.primary = Some((parse_role(v, doc_id, lineno)?, lineno));
            }
        }
        if current.secondary.is_none() {
            if let Some(v) = cols.secondary.and_then(get) {
                current.secondary = Some(parse_role(v, doc_id, lineno)?);
            }
        }
        if current.tertiary.is_none() {
            if let Some(v) = cols.tertiary.and_then(get) {
                current.tertiary = Some(parse_role(v, doc_id, lineno)?);
            }
        }
    }
    Ok(sentences)
}

/// Merges per-annotator exports of the same document into one record.
/// All exports must segment the document identically.
pub fn import_webanno(
    doc_id: &str,
    domain: Domain,
    exports: &[(&str, &str)],
) -> Result<DocumentRecord> {
    let mut merged: Vec<SentenceRecord> = Vec::new();
    for (k, (annotator, tsv)) in exports.iter().enumerate() {
        let parsed = parse_export(doc_id, tsv)?;
        if k == 0 {
            merged = parsed
                .iter()
                .enumerate()
                .map(|(i, p)| SentenceRecord::new(i, p.text.clone()))
                .collect();
        } else if parsed.len() != merged.len()
            || parsed.iter().zip(&merged).any(|(p, m)| p.text != m.text)
        {
            return Err(Error::InvalidAnnotation(format!(
                "annotator {annotator:?} segments doc {doc_id} differently"
            )));
        }
        for (i, p) in parsed.into_iter().enumerate() {
            let (primary, _) = p.primary.ok_or_else(|| {
                Error::InvalidAnnotation(format!(
                    "annotator {annotator:?} left sentence {i} of doc {doc_id} without a primary role"
                ))
            })?;
            let sentence = &mut merged[i];
            if sentence.annotations.iter().any(|c| c.annotator_id == *annotator) {
                return Err(Error::DuplicateAnnotator {
                    doc: doc_id.to_string(),
                    sentence: i,
                    annotator: annotator.to_string(),
                });
            }
            let cell = AnnotationCell {
                annotator_id: annotator.to_string(),
                primary,
                secondary: p.secondary,
                tertiary: p.tertiary,
            };
            cell.validate()?;
            sentence.annotations.push(cell);
        }
    }
    Ok(DocumentRecord {
        doc_id: doc_id.to_string(),
        domain,
        sentences: merged,
    })
}
