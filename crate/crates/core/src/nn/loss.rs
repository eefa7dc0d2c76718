use ndarray::{Array2, ArrayView2};

/// Row-wise log-softmax computed in f64 for stability.
pub fn log_softmax_rows(logits: ArrayView2<f32>) -> Array2<f64> {
    let mut out = logits.mapv(|v| v as f64);
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Summed cross-entropy over rows with optional per-row weights, plus `dL/dlogits`.
pub fn softmax_cross_entropy(
    logits: ArrayView2<f32>,
    targets: &[usize],
    row_weights: Option<&[f64]>,
) -> (f64, Array2<f32>) {
    assert_eq!(logits.nrows(), targets.len());
    let logp = log_softmax_rows(logits);
    let mut grad = Array2::<f32>::zeros(logits.dim());
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let w = row_weights.map_or(1.0, |ws| ws[r]);
        loss -= w * logp[[r, t]];
        for c in 0..logits.ncols() {
            let p = logp[[r, c]].exp();
            let y = if c == t { 1.0 } else { 0.0 };
            grad[[r, c]] = (w * (p - y)) as f32;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(array![[0.0f32, 0.0]].view(), &[1], None);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(grad, array![[0.5f32, -0.5]]);
    }

    #[test]
    fn weighted_rows() {
        let logits = array![[1.0f32, 2.0], [3.0, -1.0]];
        let (l1, _) = softmax_cross_entropy(logits.view(), &[0, 0], None);
        let (l2, g2) = softmax_cross_entropy(logits.view(), &[0, 0], Some(&[0.5, 0.5]));
        assert!((l1 * 0.5 - l2).abs() < 1e-12);
        assert!(g2.iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn log_softmax_handles_large_values() {
        let lp = log_softmax_rows(array![[1000.0f32, 0.0]].view());
        assert!(lp[[0, 0]].abs() < 1e-12);
        assert!(lp.iter().all(|v| v.is_finite()));
    }
}
