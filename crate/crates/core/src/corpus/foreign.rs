//! Corpora annotated under a different label scheme (e.g. the 8-label G
//! corpus), mapped onto the main labels through a user-supplied table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::model::{DocumentRecord, Domain, MainLabel, SentenceRecord};
use crate::{util, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappedLabel {
    Main(MainLabel),
    Drop,
}

/// Foreign label → main label (or `DROP`). Read from a JSON object such as
/// `{"Facts": "FAC", "Argument": "ARG", "None": "DROP"}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMapping {
    entries: BTreeMap<String, MappedLabel>,
}

impl LabelMapping {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (from, to) in pairs {
            let mapped = if to == "DROP" {
                MappedLabel::Drop
            } else {
                MappedLabel::Main(to.parse().map_err(|_| {
                    Error::InvalidConfig(format!("mapping target {to:?} is not a main label or DROP"))
                })?)
            };
            entries.insert(from.to_string(), mapped);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw: BTreeMap<String, String> = util::read_json(path)?;
        Self::from_pairs(raw.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn get(&self, label: &str) -> Result<MappedLabel> {
        self.entries
            .get(label)
            .copied()
            .ok_or_else(|| Error::MissingMapping(format!("no mapping for foreign label {label:?}")))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Deserialize)]
struct ForeignDoc {
    doc_id: String,
    #[serde(default)]
    domain: Option<Domain>,
    sentences: Vec<ForeignSentence>,
}

#[derive(Deserialize)]
struct ForeignSentence {
    text: String,
    label: String,
}

/// Loads `{"doc_id", "domain"?, "sentences": [{"text", "label"}]}` lines and
/// maps every label through `mapping`. Unmapped labels are an error.
pub fn load_foreign_corpus(
    path: &Path,
    mapping: &LabelMapping,
    default_domain: Domain,
) -> Result<Vec<DocumentRecord>> {
    let raw: Vec<ForeignDoc> = util::read_jsonl(path)?;
    raw.into_iter()
        .map(|d| {
            let mut sentences = Vec::with_capacity(d.sentences.len());
            for s in d.sentences {
                if let MappedLabel::Main(l) = mapping.get(&s.label)? {
                    let mut rec = SentenceRecord::new(sentences.len(), s.text);
                    rec.gold_main = Some(l);
                    sentences.push(rec);
                }
            }
            Ok(DocumentRecord {
                doc_id: d.doc_id,
                domain: d.domain.unwrap_or(default_domain),
                sentences,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_and_drops() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        std::fs::write(
            &path,
            r#"{"doc_id":"g1","sentences":[{"text":"a","label":"Facts"},{"text":"b","label":"None"},{"text":"c","label":"Ratio"}]}"#,
        )
        .unwrap();
        let mapping =
            LabelMapping::from_pairs([("Facts", "FAC"), ("None", "DROP"), ("Ratio", "ROD")]).unwrap();
        let docs = load_foreign_corpus(&path, &mapping, Domain::G).unwrap();
        assert_eq!(docs[0].domain, Domain::G);
        assert_eq!(docs[0].main_labels().unwrap(), vec![MainLabel::Fac, MainLabel::Rod]);
        assert_eq!(docs[0].sentences[1].index, 1);

        let partial = LabelMapping::from_pairs([("Facts", "FAC")]).unwrap();
        assert!(matches!(
            load_foreign_corpus(&path, &partial, Domain::G),
            Err(Error::MissingMapping(_))
        ));
    }

    #[test]
    fn bad_target_rejected() {
        assert!(LabelMapping::from_pairs([("x", "ISS")]).is_err());
    }
}
