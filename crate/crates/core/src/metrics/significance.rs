use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Mean of `a - b`.
    pub observed: f64,
    /// Two-sided p-value with the add-one correction.
    pub p_value: f64,
    pub iterations: usize,
}

/// Paired sign-flip permutation test on matched scores (for example
/// per-document F1 of two systems).
pub fn paired_permutation_test(
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() || iterations == 0 {
        return Err(Error::InvalidInput("permutation test needs data and iterations".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let observed = diffs.iter().sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..iterations {
        let s: f64 = diffs
            .iter()
            .map(|d| if rng.random::<bool>() { *d } else { -*d })
            .sum::<f64>()
            / n;
        if s.abs() >= observed.abs() - 1e-12 {
            extreme += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        p_value: (extreme + 1) as f64 / (iterations + 1) as f64,
        iterations,
    })
}
