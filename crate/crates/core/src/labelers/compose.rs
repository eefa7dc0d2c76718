use ndarray::{s, Array2, ArrayView2};

use crate::{Error, Result};

/// Builds shift-aware sentence inputs: row `i` is
/// `e(i-1,i) ⊕ b(i) ⊕ e(i,i+1)`, with zero vectors before the first and
/// after the last sentence.
pub fn compose_lsp_input(
    sentence_embeddings: ArrayView2<f32>,
    shift_embeddings: ArrayView2<f32>,
) -> Result<Array2<f32>> {
    let n = sentence_embeddings.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("cannot compose an empty document".into()));
    }
    if shift_embeddings.nrows() != n - 1 {
        return Err(Error::LengthMismatch {
            left: n - 1,
            right: shift_embeddings.nrows(),
        });
    }
    let d = sentence_embeddings.ncols();
    let e = shift_embeddings.ncols();
    let mut out = Array2::<f32>::zeros((n, 2 * e + d));
    for i in 0..n {
        if i > 0 {
            out.slice_mut(s![i, ..e]).assign(&shift_embeddings.row(i - 1));
        }
        out.slice_mut(s![i, e..e + d]).assign(&sentence_embeddings.row(i));
        if i + 1 < n {
            out.slice_mut(s![i, e + d..]).assign(&shift_embeddings.row(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_sentence_has_zero_boundaries() {
        let b = array![[1.0f32, 2.0]];
        let shifts = Array2::<f32>::zeros((0, 3));
        let out = compose_lsp_input(b.view(), shifts.view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0]]);
    }

    #[test]
    fn middle_row_has_both_shift_vectors() {
        let b = array![[1.0f32], [2.0], [3.0]];
        let shifts = array![[10.0f32], [20.0]];
        let out = compose_lsp_input(b.view(), shifts.view()).unwrap();
        assert_eq!(out, array![[0.0, 1.0, 10.0], [10.0, 2.0, 20.0], [20.0, 3.0, 0.0]]);
    }

    #[test]
    fn reference_width() {
        let b = Array2::<f32>::zeros((4, 768));
        let shifts = Array2::<f32>::zeros((3, 768));
        assert_eq!(compose_lsp_input(b.view(), shifts.view()).unwrap().ncols(), 2304);
    }

    #[test]
    fn errors() {
        let empty = Array2::<f32>::zeros((0, 2));
        assert!(compose_lsp_input(empty.view(), empty.view()).is_err());
        let b = Array2::<f32>::zeros((3, 2));
        assert!(compose_lsp_input(b.view(), b.view()).is_err());
    }
}
