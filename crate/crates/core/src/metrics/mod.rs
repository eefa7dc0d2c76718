//! Evaluation and agreement measures.

mod confusion;
mod f1;
mod kappa;
mod significance;

pub use confusion::{confusion_matrix, ConfusionMatrix, Normalization};
pub use f1::{
    aggregate_pairwise_agreement, label_f1, label_f1_with, macro_f1, macro_f1_with,
    pairwise_annotator_f1, EmptyLabelPolicy, MacroOptions, MetricsReport, RunMetadata,
    SupportPolicy,
};
pub use kappa::{category_counts, fleiss_kappa, AgreementGrouping, AnnotatorTable};
pub use significance::{paired_permutation_test, PermutationResult};

use crate::{Error, Result};

/// Percent drop of a transferred score relative to the in-domain score:
/// `100 * (in_domain - transferred) / in_domain`.
pub fn domain_transfer_delta(f1_in_domain: f64, f1_transferred: f64) -> Result<f64> {
    if !(f1_in_domain > 0.0) {
        return Err(Error::ZeroBaseline(f1_in_domain));
    }
    Ok(100.0 * (f1_in_domain - f1_transferred) / f1_in_domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_delta_examples() {
        assert!((domain_transfer_delta(0.55, 0.41).unwrap() - 25.45).abs() < 0.01);
        assert!((domain_transfer_delta(0.59, 0.46).unwrap() - 22.03).abs() < 0.01);
        assert_eq!(domain_transfer_delta(0.37, 0.37).unwrap(), 0.0);
        assert!(matches!(domain_transfer_delta(0.0, 0.3), Err(Error::ZeroBaseline(_))));
    }
}
