use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{util, Error, Result};

macro_rules! code_enum {
    (
        $(#[$meta:meta])*
        $name:ident { $($variant:ident => $code:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = [$($code),+].len();

            /// The exact uppercase code used in files.
            pub fn code(self) -> &'static str {
                match self {
                    $($name::$variant => $code),+
                }
            }

            /// Position in [`Self::ALL`].
            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($code => Ok($name::$variant),)+
                    other => Err(Error::Parse {
                        context: stringify!($name).to_string(),
                        message: format!("unknown code {other:?}"),
                    }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.code())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

code_enum! {
    /// The 13 fine-grained rhetorical roles used by annotators.
    RhetoricalRole {
        Fac => "FAC",
        Iss => "ISS",
        ArgP => "ARG-P",
        ArgR => "ARG-R",
        Sta => "STA",
        Dis => "DIS",
        PreR => "PRE-R",
        PreNr => "PRE-NR",
        PreO => "PRE-O",
        Rlc => "RLC",
        Rod => "ROD",
        Rpc => "RPC",
        Non => "NON",
    }
}

code_enum! {
    /// The 7 main labels predicted by the models.
    MainLabel {
        Fac => "FAC",
        Arg => "ARG",
        Pre => "PRE",
        Rod => "ROD",
        Rpc => "RPC",
        Rlc => "RLC",
        Sta => "STA",
    }
}

/// Outcome of mapping a fine-grained role onto the main label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Keep(MainLabel),
    Drop,
}

impl RhetoricalRole {
    /// Reduction map onto the 7 main labels. ISS folds into FAC; NON and DIS are dropped.
    pub fn reduce(self) -> Reduction {
        use RhetoricalRole::*;
        match self {
            Fac | Iss => Reduction::Keep(MainLabel::Fac),
            ArgP | ArgR => Reduction::Keep(MainLabel::Arg),
            PreR | PreNr | PreO => Reduction::Keep(MainLabel::Pre),
            Sta => Reduction::Keep(MainLabel::Sta),
            Rlc => Reduction::Keep(MainLabel::Rlc),
            Rod => Reduction::Keep(MainLabel::Rod),
            Rpc => Reduction::Keep(MainLabel::Rpc),
            Non | Dis => Reduction::Drop,
        }
    }
}

impl MainLabel {
    /// Row names used by label-wise report tables (AR, FAC, PR, ...).
    pub fn report_name(self) -> &'static str {
        match self {
            MainLabel::Arg => "AR",
            MainLabel::Pre => "PR",
            other => other.code(),
        }
    }

    /// Row order of label-wise report tables.
    pub const REPORT_ORDER: [MainLabel; 7] = [
        MainLabel::Arg,
        MainLabel::Fac,
        MainLabel::Pre,
        MainLabel::Sta,
        MainLabel::Rlc,
        MainLabel::Rpc,
        MainLabel::Rod,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "IT")]
    It,
    #[serde(rename = "CL")]
    Cl,
    #[serde(rename = "G")]
    G,
}

impl Domain {
    pub fn code(self) -> &'static str {
        match self {
            Domain::It => "IT",
            Domain::Cl => "CL",
            Domain::G => "G",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IT" => Ok(Domain::It),
            "CL" => Ok(Domain::Cl),
            "G" => Ok(Domain::G),
            other => Err(Error::Parse {
                context: "domain".into(),
                message: format!("unknown domain {other:?}"),
            }),
        }
    }
}

/// One annotator's labels for one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCell {
    #[serde(skip)]
    pub annotator_id: String,
    pub primary: RhetoricalRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<RhetoricalRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tertiary: Option<RhetoricalRole>,
}

impl AnnotationCell {
    pub fn new(annotator_id: impl Into<String>, primary: RhetoricalRole) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            primary,
            secondary: None,
            tertiary: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tertiary.is_some() && self.secondary.is_none() {
            return Err(Error::InvalidAnnotation(format!(
                "annotator {:?} gives a tertiary role without a secondary one",
                self.annotator_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    #[serde(skip)]
    pub index: usize,
    pub text: String,
    #[serde(
        default,
        serialize_with = "ser_cells",
        deserialize_with = "de_cells",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub annotations: Vec<AnnotationCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<RhetoricalRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_main: Option<MainLabel>,
}

impl SentenceRecord {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
            annotations: Vec::new(),
            gold: None,
            gold_main: None,
        }
    }

    /// The main label of this sentence: the stored one, or the reduced gold role.
    pub fn main_label(&self) -> Option<MainLabel> {
        self.gold_main.or_else(|| match self.gold?.reduce() {
            Reduction::Keep(l) => Some(l),
            Reduction::Drop => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub domain: Domain,
    pub sentences: Vec<SentenceRecord>,
}

impl DocumentRecord {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Main labels for every sentence, failing on the first unlabeled one.
    pub fn main_labels(&self) -> Result<Vec<MainLabel>> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.main_label().ok_or_else(|| Error::MissingGold {
                    doc_id: self.doc_id.clone(),
                    sentence: i,
                })
            })
            .collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }

    /// Resets indices to positions; called after loading or filtering.
    pub fn reindex(&mut self) {
        for (i, s) in self.sentences.iter_mut().enumerate() {
            s.index = i;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sentences.iter().enumerate() {
            if s.index != i {
                return Err(Error::InvalidInput(format!(
                    "doc {}: sentence at position {i} carries index {}",
                    self.doc_id, s.index
                )));
            }
            let mut seen = HashSet::new();
            for cell in &s.annotations {
                if !seen.insert(cell.annotator_id.as_str()) {
                    return Err(Error::DuplicateAnnotator {
                        doc: self.doc_id.clone(),
                        sentence: i,
                        annotator: cell.annotator_id.clone(),
                    });
                }
                cell.validate().map_err(|e| {
                    Error::InvalidAnnotation(format!("doc {}, sentence {i}: {e}", self.doc_id))
                })?;
            }
        }
        Ok(())
    }
}

fn ser_cells<S: Serializer>(cells: &[AnnotationCell], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(cells.len()))?;
    for cell in cells {
        map.serialize_entry(&cell.annotator_id, cell)?;
    }
    map.end()
}

fn de_cells<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<AnnotationCell>, D::Error> {
    struct CellsVisitor;

    impl<'de> Visitor<'de> for CellsVisitor {
        type Value = Vec<AnnotationCell>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from annotator id to annotation cell")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            // Duplicates are kept here and rejected by `DocumentRecord::validate`,
            // which knows the document and sentence position.
            let mut cells = Vec::new();
            while let Some(id) = map.next_key::<String>()? {
                let mut cell: AnnotationCell = map.next_value()?;
                cell.annotator_id = id;
                cells.push(cell);
            }
            Ok(cells)
        }
    }

    d.deserialize_map(CellsVisitor)
}

/// Parses one corpus JSONL line, mapping schema violations to typed errors.
fn parse_line(line: &str, lineno: usize, path: &Path) -> Result<DocumentRecord> {
    match serde_json::from_str::<DocumentRecord>(line) {
        Ok(mut doc) => {
            doc.reindex();
            doc.validate()?;
            Ok(doc)
        }
        Err(e) => {
            let msg = e.to_string();
            let doc = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("doc_id").and_then(|d| d.as_str()).map(str::to_string))
                .unwrap_or_else(|| "?".to_string());
            if let Some(code) = msg
                .split_once("unknown code \"")
                .and_then(|(_, rest)| rest.split('"').next())
            {
                return Err(Error::UnknownLabel {
                    doc,
                    line: lineno,
                    code: code.to_string(),
                });
            }
            Err(Error::json(format!("{}:{lineno}", path.display()), e))
        }
    }
}

/// Reads a corpus JSONL file (one document per line).
pub fn load_corpus(path: &Path) -> Result<Vec<DocumentRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text, path)
}

pub(crate) fn parse_corpus_str(text: &str, path: &Path) -> Result<Vec<DocumentRecord>> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_line(line, i + 1, path)?;
        if !ids.insert(doc.doc_id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate doc_id {:?}", doc.doc_id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_corpus(path: &Path, docs: &[DocumentRecord]) -> Result<()> {
    util::write_jsonl(path, docs)
}
