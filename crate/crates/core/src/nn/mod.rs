//! Minimal dense neural-network toolkit with hand-written backpropagation.
//!
//! All parameters of a model live in one flat [`ParamStore`]; layers hold
//! [`ParamId`] handles into it and accumulate gradients into a [`Grads`]
//! buffer of the same length. This keeps optimizers, checkpointing and
//! numerical gradient checks independent of the model structure.

mod io;
mod layers;
mod loss;
mod optim;

pub use io::{read_weights, write_weights};
pub use layers::{BiLstm, BiLstmCache, Linear, Lstm, LstmCache};
pub use loss::{log_softmax_rows, softmax_cross_entropy};
pub use optim::{clip_grad_norm, Adam};

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A `rows × cols` block inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamId {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f32),
    /// Uniform in `[-a, a]`.
    Uniform(f32),
    /// Glorot uniform based on `rows + cols`.
    Xavier,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    data: Vec<f32>,
    names: Vec<(String, ParamId)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let id = ParamId {
            offset: self.data.len(),
            rows,
            cols,
        };
        let n = rows * cols;
        match init {
            Init::Zeros => self.data.extend(std::iter::repeat_n(0.0, n)),
            Init::Constant(c) => self.data.extend(std::iter::repeat_n(c, n)),
            Init::Uniform(a) => self.data.extend((0..n).map(|_| rng.random_range(-a..=a))),
            Init::Xavier => {
                let a = (6.0 / (rows + cols).max(1) as f32).sqrt();
                self.data.extend((0..n).map(|_| rng.random_range(-a..=a)));
            }
        }
        self.names.push((name.into(), id));
        id
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn names(&self) -> &[(String, ParamId)] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }

    pub fn view(&self, id: ParamId) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((id.rows, id.cols), &self.data[id.range()])
            .expect("parameter block shape")
    }

    pub fn view_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f32> {
        ArrayViewMut2::from_shape((id.rows, id.cols), &mut self.data[id.range()])
            .expect("parameter block shape")
    }

    /// Replaces all values; the layout must match.
    pub fn load_values(&mut self, values: &[f32]) -> crate::Result<()> {
        if values.len() != self.data.len() {
            return Err(crate::Error::DimensionMismatch {
                context: "parameter blob".into(),
                expected: self.data.len(),
                actual: values.len(),
            });
        }
        self.data.copy_from_slice(values);
        Ok(())
    }
}

/// Gradient buffer laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<f32>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            data: vec![0.0; store.len()],
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn view(&self, id: ParamId) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((id.rows, id.cols), &self.data[id.range()])
            .expect("gradient block shape")
    }

    pub fn view_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f32> {
        ArrayViewMut2::from_shape((id.rows, id.cols), &mut self.data[id.range()])
            .expect("gradient block shape")
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f32) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f32) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }

    pub fn norm(&self) -> f32 {
        self.data.iter().map(|g| (*g as f64).powi(2)).sum::<f64>().sqrt() as f32
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
