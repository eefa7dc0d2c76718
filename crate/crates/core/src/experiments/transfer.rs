use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, LabelMapping};
use crate::metrics::domain_transfer_delta;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransferDomain {
    It,
    Cl,
    ItCl,
    G,
}

impl TransferDomain {
    pub fn code(self) -> &'static str {
        match self {
            Self::It => "IT",
            Self::Cl => "CL",
            Self::ItCl => "IT+CL",
            Self::G => "G",
        }
    }
}

impl fmt::Display for TransferDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TransferDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IT" => Ok(Self::It),
            "CL" => Ok(Self::Cl),
            "IT+CL" | "ITCL" => Ok(Self::ItCl),
            "G" => Ok(Self::G),
            other => Err(Error::Parse {
                context: "transfer domain".into(),
                message: format!("unknown domain {other:?}"),
            }),
        }
    }
}

impl Serialize for TransferDomain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for TransferDomain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainSplit {
    pub train: Vec<DocumentRecord>,
    pub val: Vec<DocumentRecord>,
    pub test: Vec<DocumentRecord>,
}

impl DomainSplit {
    fn merged(a: &DomainSplit, b: &DomainSplit) -> DomainSplit {
        let cat = |x: &[DocumentRecord], y: &[DocumentRecord]| x.iter().chain(y).cloned().collect();
        DomainSplit {
            train: cat(&a.train, &b.train),
            val: cat(&a.val, &b.val),
            test: cat(&a.test, &b.test),
        }
    }
}

/// Per-domain splits. IT+CL is derived from IT and CL; G is only accepted
/// together with the label mapping that produced it.
#[derive(Debug, Clone, Default)]
pub struct TransferData {
    splits: BTreeMap<TransferDomain, DomainSplit>,
    g_mapping: Option<LabelMapping>,
}

impl TransferData {
    pub fn new(it: DomainSplit, cl: DomainSplit) -> Self {
        let mut splits = BTreeMap::new();
        splits.insert(TransferDomain::ItCl, DomainSplit::merged(&it, &cl));
        splits.insert(TransferDomain::It, it);
        splits.insert(TransferDomain::Cl, cl);
        Self {
            splits,
            g_mapping: None,
        }
    }

    /// Adds the G corpus, loaded through `mapping`.
    pub fn with_g(mut self, g: DomainSplit, mapping: &LabelMapping) -> Result<Self> {
        if mapping.is_empty() {
            return Err(Error::MissingMapping("the G label mapping is empty".into()));
        }
        self.g_mapping = Some(mapping.clone());
        self.splits.insert(TransferDomain::G, g);
        Ok(self)
    }

    pub fn split(&self, domain: TransferDomain) -> Result<&DomainSplit> {
        self.splits.get(&domain).ok_or_else(|| match domain {
            TransferDomain::G => Error::MissingMapping("G needs an explicit label mapping file".into()),
            d => Error::InvalidInput(format!("no data for domain {d}")),
        })
    }

    pub fn g_mapping(&self) -> Option<&LabelMapping> {
        self.g_mapping.as_ref()
    }
}

/// A trained model that can be scored on a test set.
pub trait TransferModel: Send + Sync {
    fn macro_f1(&self, test: &[DocumentRecord]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub train_domain: TransferDomain,
    pub test_domain: TransferDomain,
    pub variant: String,
    pub f1: f64,
    /// F1 of the same model on its own domain's test set, when that cell
    /// was part of the matrix.
    pub in_domain_f1: Option<f64>,
    /// Percent drop relative to `in_domain_f1`.
    pub delta_g: Option<f64>,
}

/// Trains one model per train domain (in parallel) and scores it on every
/// requested test domain.
pub fn run_transfer<M, F>(
    cells: &[(TransferDomain, TransferDomain)],
    variant: &str,
    data: &TransferData,
    train: F,
) -> Result<Vec<TransferRun>>
where
    M: TransferModel,
    F: Fn(&DomainSplit) -> Result<M> + Sync,
{
    for &(a, b) in cells {
        data.split(a)?;
        data.split(b)?;
    }
    let train_domains: Vec<TransferDomain> = cells.iter().map(|c| c.0).collect::<BTreeSet<_>>().into_iter().collect();
    let models: BTreeMap<TransferDomain, M> = train_domains
        .par_iter()
        .map(|&d| Ok((d, train(data.split(d)?)?)))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(a, b)| models[&a].macro_f1(&data.split(b)?.test))
        .collect::<Result<_>>()?;
    let score_of = |a: TransferDomain, b: TransferDomain| {
        cells.iter().position(|&c| c == (a, b)).map(|i| scores[i])
    };
    cells
        .iter()
        .zip(&scores)
        .map(|(&(a, b), &f1)| {
            let in_domain_f1 = score_of(a, a);
            let delta_g = in_domain_f1.map(|r| domain_transfer_delta(r, f1)).transpose()?;
            Ok(TransferRun {
                train_domain: a,
                test_domain: b,
                variant: variant.into(),
                f1,
                in_domain_f1,
                delta_g,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, MainLabel, SentenceRecord};

    fn doc(id: &str, n: usize) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            domain: Domain::It,
            sentences: (0..n)
                .map(|i| {
                    let mut s = SentenceRecord::new(i, "x");
                    s.gold_main = Some(MainLabel::Fac);
                    s
                })
                .collect(),
        }
    }

    /// Scores a test set by its first document's length, so each domain
    /// gets a known F1.
    struct LengthModel;
    impl TransferModel for LengthModel {
        fn macro_f1(&self, test: &[DocumentRecord]) -> Result<f64> {
            Ok(test[0].len() as f64 / 100.0)
        }
    }

    fn split(n: usize) -> DomainSplit {
        DomainSplit {
            train: vec![doc("tr", 1)],
            val: vec![],
            test: vec![doc("te", n)],
        }
    }

    #[test]
    fn deltas_follow_the_in_domain_cell() {
        let mapping = LabelMapping::from_pairs([("Facts", "FAC")]).unwrap();
        let data = TransferData::new(split(41), split(48)).with_g(split(55), &mapping).unwrap();
        use TransferDomain::*;
        let cells = [(G, G), (G, Cl), (G, It), (ItCl, G)];
        let runs = run_transfer(&cells, "bilstm_crf", &data, |_| Ok(LengthModel)).unwrap();
        assert_eq!(runs[0].delta_g, Some(0.0));
        assert!((runs[1].delta_g.unwrap() - 100.0 * (0.55 - 0.48) / 0.55).abs() < 1e-9);
        assert!((runs[2].delta_g.unwrap() - 25.4545).abs() < 1e-3);
        assert_eq!(runs[3].delta_g, None);
        for r in &runs {
            if let (Some(a), Some(d)) = (r.in_domain_f1, r.delta_g) {
                assert_eq!(d, domain_transfer_delta(a, r.f1).unwrap());
            }
        }
    }

    #[test]
    fn g_without_mapping_is_an_error() {
        let data = TransferData::new(split(41), split(48));
        let cells = [(TransferDomain::G, TransferDomain::It)];
        let err = run_transfer(&cells, "x", &data, |_| Ok(LengthModel)).unwrap_err();
        assert!(matches!(err, Error::MissingMapping(_)));
        assert_eq!("it+cl".parse::<TransferDomain>().unwrap(), TransferDomain::ItCl);
    }
}
