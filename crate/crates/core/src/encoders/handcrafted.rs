use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use regex::Regex;

use super::SentenceEncoder;
use crate::util::{fnv1a, word_tokens};
use crate::Result;

pub const HANDCRAFTED_DIM: usize = 172;

/// Cue phrases associated with rhetorical roles in legal judgments.
const CUES: &[&str] = &[
    // facts
    "filed", "return", "assessment", "assessee", "appellant", "respondent", "petitioner",
    "year", "notice", "order dated", "complaint", "accused", "police", "incident",
    // arguments
    "contended", "submitted", "argued", "learned counsel", "urged", "plea", "contention",
    "on behalf of", "placed reliance",
    // precedents
    "held that", "observed", "in the case of", "supra", "reported in", "judgment in",
    "relied upon", "ratio", "followed",
    // statutes
    "section", "act", "rule", "clause", "provision", "sub-section", "article", "explanation",
    // ratio of the decision
    "we are of the view", "in our opinion", "we find", "therefore", "thus", "accordingly",
    "it is clear", "we hold", "considered",
    // ruling
    "appeal is allowed", "appeal is dismissed", "allowed", "dismissed", "set aside",
    "no order as to costs", "disposed of", "remanded",
    // issues and lower courts
    "question", "issue", "whether", "tribunal", "high court", "trial court",
];

fn statute_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(section|sec\.|s\.|article|art\.|rule|order)\s*\d+[a-z]?\b").expect("valid regex")
    })
}

fn citation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(\bv(s)?\.\s)|(\bAIR\b)|(\bSCC\b)|(\bITR\b)|(\[\d{4}\])|(\(\d{4}\))")
            .expect("valid regex")
    })
}

fn date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b\d{1,2}[./-]\d{1,2}[./-]\d{2,4}\b|\b(19|20)\d{2}\b").expect("valid regex")
    })
}

fn money_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(rs\.?|inr|₹)\s*[\d,]+").expect("valid regex"))
}

/// Position-aware surface features with a fixed 172-dim layout:
///
/// | dims | feature |
/// |------|---------|
/// | 0 | relative position `i / (n-1)` |
/// | 1-2 | first / last sentence |
/// | 3-12 | position decile |
/// | 13-20 | token-count bucket |
/// | 21 | log token count |
/// | 22-26 | statute, citation, date, money, quotation flags |
/// | 27-30 | digit, uppercase, punctuation, quote-character ratios |
/// | 31.. | cue-phrase indicators |
/// | then 32 | hashed first three words |
///
/// Remaining dimensions are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HandcraftedFeaturizer;

const LENGTH_BUCKETS: [usize; 7] = [5, 10, 15, 20, 30, 40, 60];
const CUE_OFFSET: usize = 31;
const HASH_BUCKETS: usize = 32;

impl HandcraftedFeaturizer {
    /// Features of sentence `index` within a document of `doc_len` sentences.
    pub fn features(&self, sentence: &str, index: usize, doc_len: usize) -> Array1<f32> {
        let mut f = Array1::<f32>::zeros(HANDCRAFTED_DIM);
        let rel = if doc_len > 1 {
            index as f32 / (doc_len - 1) as f32
        } else {
            0.0
        };
        f[0] = rel;
        f[1] = f32::from(index == 0);
        f[2] = f32::from(index + 1 == doc_len);
        f[3 + ((rel * 10.0) as usize).min(9)] = 1.0;
        let tokens = word_tokens(sentence);
        let bucket = LENGTH_BUCKETS
            .iter()
            .position(|&b| tokens.len() <= b)
            .unwrap_or(LENGTH_BUCKETS.len());
        f[13 + bucket] = 1.0;
        f[21] = (1.0 + tokens.len() as f32).ln() / 5.0;
        f[22] = f32::from(statute_re().is_match(sentence));
        f[23] = f32::from(citation_re().is_match(sentence));
        f[24] = f32::from(date_re().is_match(sentence));
        f[25] = f32::from(money_re().is_match(sentence));
        f[26] = f32::from(sentence.contains('"') || sentence.contains('“'));
        let chars = sentence.chars().count().max(1) as f32;
        let count = |p: fn(&char) -> bool| sentence.chars().filter(p).count() as f32 / chars;
        f[27] = count(|c| c.is_ascii_digit());
        f[28] = count(|c| c.is_uppercase());
        f[29] = count(|c| c.is_ascii_punctuation());
        f[30] = count(|c| matches!(c, '"' | '\'' | '“' | '”'));
        let lower = format!(" {} ", tokens.join(" "));
        for (k, cue) in CUES.iter().enumerate() {
            let needle = format!(" {} ", word_tokens(cue).join(" "));
            f[CUE_OFFSET + k] = f32::from(lower.contains(&needle));
        }
        let hash_offset = CUE_OFFSET + CUES.len();
        for t in tokens.iter().take(3) {
            f[hash_offset + (fnv1a(t.as_bytes()) % HASH_BUCKETS as u64) as usize] = 1.0;
        }
        f
    }
}

impl SentenceEncoder for HandcraftedFeaturizer {
    fn encoder_id(&self) -> String {
        format!("handcrafted-v1:d{HANDCRAFTED_DIM}")
    }

    fn dim(&self) -> usize {
        HANDCRAFTED_DIM
    }

    /// The batch is read as one whole document.
    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        let n = sentences.len();
        let mut out = Array2::<f32>::zeros((n, HANDCRAFTED_DIM));
        for (i, s) in sentences.iter().enumerate() {
            out.row_mut(i).assign(&self.features(s, i, n));
        }
        Ok(out)
    }
}
