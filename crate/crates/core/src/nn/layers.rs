use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{sigmoid, Grads, Init, ParamId, ParamStore};

/// Affine map `y = x W + b` applied to each row of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), input, output, Init::Xavier, rng);
        let b = store.add(format!("{name}.b"), 1, output, Init::Zeros, rng);
        Self { input, output, w, b }
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f32>) -> Array2<f32> {
        let mut y = x.dot(&store.view(self.w));
        y += &store.view(self.b);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: ArrayView2<f32>,
        dy: ArrayView2<f32>,
    ) -> Array2<f32> {
        general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grads.view_mut(self.w));
        {
            let mut gb = grads.view_mut(self.b);
            let mut row = gb.row_mut(0);
            row += &dy.sum_axis(Axis(0));
        }
        dy.dot(&store.view(self.w).t())
    }
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    gates: Array2<f32>,
    cells: Array2<f32>,
    outputs: Array2<f32>,
}

impl LstmCache {
    pub fn outputs(&self) -> &Array2<f32> {
        &self.outputs
    }
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut R,
    ) -> Self {
        let a = 1.0 / (hidden as f32).sqrt();
        let wx = store.add(format!("{name}.wx"), input, 4 * hidden, Init::Uniform(a), rng);
        let wh = store.add(format!("{name}.wh"), hidden, 4 * hidden, Init::Uniform(a), rng);
        let b = store.add(format!("{name}.b"), 1, 4 * hidden, Init::Zeros, rng);
        store
            .view_mut(b)
            .slice_mut(s![0, hidden..2 * hidden])
            .fill(1.0);
        Self {
            input,
            hidden,
            reverse,
            wx,
            wh,
            b,
        }
    }

    fn order(&self, n: usize) -> Vec<usize> {
        if self.reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        }
    }

    /// Runs over all rows of `x`; output row `t` is the hidden state at position `t`.
    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f32>) -> LstmCache {
        let n = x.nrows();
        let h = self.hidden;
        let mut xw = x.dot(&store.view(self.wx));
        xw += &store.view(self.b);
        let wh = store.view(self.wh);
        let mut gates = Array2::<f32>::zeros((n, 4 * h));
        let mut cells = Array2::<f32>::zeros((n, h));
        let mut outputs = Array2::<f32>::zeros((n, h));
        let mut h_prev = Array1::<f32>::zeros(h);
        let mut c_prev = Array1::<f32>::zeros(h);
        for t in self.order(n) {
            let mut z = xw.row(t).to_owned();
            z += &h_prev.dot(&wh);
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = z[2 * h + j].tanh();
                let o = sigmoid(z[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                gates[[t, j]] = i;
                gates[[t, h + j]] = f;
                gates[[t, 2 * h + j]] = g;
                gates[[t, 3 * h + j]] = o;
                cells[[t, j]] = c;
                outputs[[t, j]] = o * c.tanh();
            }
            h_prev.assign(&outputs.row(t));
            c_prev.assign(&cells.row(t));
        }
        LstmCache {
            gates,
            cells,
            outputs,
        }
    }

    /// Backpropagation through time. `dh` holds `dL/dh_t` for every position.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: ArrayView2<f32>,
        cache: &LstmCache,
        dh: ArrayView2<f32>,
    ) -> Array2<f32> {
        let n = x.nrows();
        let h = self.hidden;
        let wh = store.view(self.wh);
        let order = self.order(n);
        let mut dz = Array2::<f32>::zeros((n, 4 * h));
        let mut h_prev_rows = Array2::<f32>::zeros((n, h));
        let mut dh_next = Array1::<f32>::zeros(h);
        let mut dc_next = Array1::<f32>::zeros(h);
        for step in (0..n).rev() {
            let t = order[step];
            let prev = if step > 0 { Some(order[step - 1]) } else { None };
            if let Some(p) = prev {
                h_prev_rows.row_mut(t).assign(&cache.outputs.row(p));
            }
            for j in 0..h {
                let i = cache.gates[[t, j]];
                let f = cache.gates[[t, h + j]];
                let g = cache.gates[[t, 2 * h + j]];
                let o = cache.gates[[t, 3 * h + j]];
                let c_prev = prev.map_or(0.0, |p| cache.cells[[p, j]]);
                let tc = cache.cells[[t, j]].tanh();
                let dh_t = dh[[t, j]] + dh_next[j];
                let d_o = dh_t * tc;
                let dc = dc_next[j] + dh_t * o * (1.0 - tc * tc);
                dc_next[j] = dc * f;
                dz[[t, j]] = dc * g * i * (1.0 - i);
                dz[[t, h + j]] = dc * c_prev * f * (1.0 - f);
                dz[[t, 2 * h + j]] = dc * i * (1.0 - g * g);
                dz[[t, 3 * h + j]] = d_o * o * (1.0 - o);
            }
            dh_next = dz.row(t).dot(&wh.t());
        }
        general_mat_mul(1.0, &h_prev_rows.t(), &dz, 1.0, &mut grads.view_mut(self.wh));
        general_mat_mul(1.0, &x.t(), &dz, 1.0, &mut grads.view_mut(self.wx));
        {
            let mut gb = grads.view_mut(self.b);
            let mut row = gb.row_mut(0);
            row += &dz.sum_axis(Axis(0));
        }
        dz.dot(&store.view(self.wx).t())
    }
}

/// Forward and backward LSTMs whose outputs are concatenated per position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
    outputs: Array2<f32>,
}

impl BiLstmCache {
    /// `n × 2H` concatenation `[forward | backward]`.
    pub fn outputs(&self) -> &Array2<f32> {
        &self.outputs
    }
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fwd = Lstm::new(store, &format!("{name}.fwd"), input, hidden, false, rng);
        let bwd = Lstm::new(store, &format!("{name}.bwd"), input, hidden, true, rng);
        Self { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<f32>) -> BiLstmCache {
        let fwd = self.fwd.forward(store, x);
        let bwd = self.bwd.forward(store, x);
        let outputs = ndarray::concatenate(Axis(1), &[fwd.outputs.view(), bwd.outputs.view()])
            .expect("matching row counts");
        BiLstmCache { fwd, bwd, outputs }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: ArrayView2<f32>,
        cache: &BiLstmCache,
        dh: ArrayView2<f32>,
    ) -> Array2<f32> {
        let h = self.fwd.hidden;
        let mut dx = self
            .fwd
            .backward(store, grads, x, &cache.fwd, dh.slice(s![.., ..h]));
        dx += &self
            .bwd
            .backward(store, grads, x, &cache.bwd, dh.slice(s![.., h..]));
        dx
    }
}
