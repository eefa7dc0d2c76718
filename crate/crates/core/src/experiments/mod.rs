//! Experiment harnesses: domain transfer, judgment prediction from
//! extracted roles, run manifests and multi-seed summaries.

mod judgment;
mod manifest;
mod transfer;

pub use judgment::{
    extract_rr_for_judgment, judgment_eval, last_k_tokens, ConstantClassifier, DecisionFilter, Extraction,
    JudgmentClassifier, JudgmentInput, JudgmentMode, JudgmentOutcome, ProcessClassifier, RrSource,
};
pub use manifest::{content_dir, RunManifest};
pub use transfer::{run_transfer, DomainSplit, TransferData, TransferDomain, TransferModel, TransferRun};

use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation of per-seed scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    pub stdev: f64,
    pub runs: usize,
}

impl SeedSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self {
            mean,
            stdev,
            runs: values.len(),
        })
    }
}

impl std::fmt::Display for SeedSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.stdev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_stdev() {
        let s = SeedSummary::of(&[0.68, 0.70, 0.72]).unwrap();
        assert!((s.mean - 0.70).abs() < 1e-12);
        assert!((s.stdev - 0.02).abs() < 1e-12);
        assert_eq!(SeedSummary::of(&[0.5]).unwrap().stdev, 0.0);
        assert!(SeedSummary::of(&[]).is_none());
        assert_eq!(s.to_string(), "0.7000 ± 0.0200");
    }
}
