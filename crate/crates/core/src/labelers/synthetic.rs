//! Block-structured synthetic judgments for desk-scale experiments.
//!
//! Each document is a run of label segments with geometrically distributed
//! lengths. Segments usually follow a fixed role order, so transitions carry
//! signal. Sentence words come from a label-specific vocabulary with
//! probability `cue_rate`, otherwise from a shared vocabulary; a fraction of
//! sentences use shared words only and can be labelled from context alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, Domain, MainLabel, RhetoricalRole, SentenceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub mean_segment: f64,
    pub words_per_sentence: usize,
    pub label_vocab: usize,
    pub shared_vocab: usize,
    pub cue_rate: f64,
    pub ambiguous_rate: f64,
    /// Probability that the next segment takes the next role in the usual order.
    pub order_rate: f64,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "syn".into()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            docs: 60,
            min_sentences: 20,
            max_sentences: 60,
            mean_segment: 8.0,
            words_per_sentence: 10,
            label_vocab: 40,
            shared_vocab: 400,
            cue_rate: 0.6,
            ambiguous_rate: 0.1,
            order_rate: 0.7,
            seed: 0,
            id_prefix: default_prefix(),
        }
    }
}

/// Usual order of roles in a judgment.
const ORDER: [MainLabel; 7] = [
    MainLabel::Fac,
    MainLabel::Arg,
    MainLabel::Sta,
    MainLabel::Pre,
    MainLabel::Rlc,
    MainLabel::Rpc,
    MainLabel::Rod,
];

fn fine_role(label: MainLabel) -> RhetoricalRole {
    match label {
        MainLabel::Fac => RhetoricalRole::Fac,
        MainLabel::Arg => RhetoricalRole::ArgP,
        MainLabel::Pre => RhetoricalRole::PreR,
        MainLabel::Rod => RhetoricalRole::Rod,
        MainLabel::Rpc => RhetoricalRole::Rpc,
        MainLabel::Rlc => RhetoricalRole::Rlc,
        MainLabel::Sta => RhetoricalRole::Sta,
    }
}

fn next_label(current: MainLabel, order_rate: f64, rng: &mut ChaCha8Rng) -> MainLabel {
    let pos = ORDER.iter().position(|&l| l == current).expect("all labels ordered");
    if rng.random_bool(order_rate) {
        return ORDER[(pos + 1) % ORDER.len()];
    }
    let mut k = rng.random_range(0..ORDER.len() - 1);
    if k >= pos {
        k += 1;
    }
    ORDER[k]
}

fn sentence(label: MainLabel, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> String {
    let ambiguous = rng.random_bool(cfg.ambiguous_rate);
    let words: Vec<String> = (0..cfg.words_per_sentence.max(1))
        .map(|_| {
            if !ambiguous && rng.random_bool(cfg.cue_rate) {
                format!("{}{}", label.code().to_lowercase(), rng.random_range(0..cfg.label_vocab.max(1)))
            } else {
                format!("w{}", rng.random_range(0..cfg.shared_vocab.max(1)))
            }
        })
        .collect();
    words.join(" ")
}

/// Generates `cfg.docs` labelled documents. The same config always yields
/// the same corpus.
pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Vec<DocumentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p_end = 1.0 / cfg.mean_segment.max(1.0);
    let min = cfg.min_sentences.max(1);
    let max = cfg.max_sentences.max(min);
    (0..cfg.docs)
        .map(|d| {
            let n = rng.random_range(min..=max);
            let mut label = if rng.random_bool(0.8) { MainLabel::Fac } else { ORDER[rng.random_range(0..7)] };
            let sentences = (0..n)
                .map(|i| {
                    if i > 0 && rng.random_bool(p_end) {
                        label = next_label(label, cfg.order_rate, &mut rng);
                    }
                    let mut s = SentenceRecord::new(i, sentence(label, cfg, &mut rng));
                    s.gold = Some(fine_role(label));
                    s.gold_main = Some(label);
                    s
                })
                .collect();
            DocumentRecord {
                doc_id: format!("{}-{d:03}", cfg.id_prefix),
                domain: Domain::It,
                sentences,
            }
        })
        .collect()
}
