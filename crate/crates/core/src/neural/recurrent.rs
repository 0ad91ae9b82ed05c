//! GRU and LSTM cells with explicit backpropagation through time.
//!
//! Gate parameters are stacked row-wise. GRU blocks are `[z; r; n]`:
//!
//! ```text
//! z = sigma(Wz x + Uz h + bz)
//! r = sigma(Wr x + Ur h + br)
//! n = tanh(Wn x + Un (r * h) + bn)
//! h' = (1 - z) * h + z * n
//! ```
//!
//! LSTM blocks are `[i; f; o; g]` with `c' = f * c + i * g` and
//! `h' = o * tanh(c')`.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{add_outer, glorot, sigmoid, Parameterized};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_blocks(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::config("cells", format!("unknown cell kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RecurrentCell<T> {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Input weights, `(blocks * hidden) x input`.
    pub w: Array2<T>,
    /// Recurrent weights, `(blocks * hidden) x hidden`.
    pub u: Array2<T>,
    pub b: Array1<T>,
}

/// Per-step values saved by the forward pass for backpropagation.
#[derive(Debug, Clone)]
struct StepCache<T> {
    x: Array1<T>,
    h_prev: Array1<T>,
    c_prev: Array1<T>,
    /// Activated gates, stacked like the parameters.
    gates: Array1<T>,
    /// GRU: `r * h_prev`. LSTM: `tanh(c)`.
    aux: Array1<T>,
}

/// Forward-pass record of one sequence.
#[derive(Debug, Clone)]
pub struct RecurrentTrace<T> {
    steps: Vec<StepCache<T>>,
    pub hidden: Vec<Array1<T>>,
}

impl<T: Real> RecurrentTrace<T> {
    pub fn final_hidden(&self) -> &Array1<T> {
        self.hidden.last().expect("non-empty sequence")
    }
}

impl<T: Real> RecurrentCell<T> {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let rows = kind.gate_blocks() * hidden_dim;
        RecurrentCell {
            kind,
            input_dim,
            hidden_dim,
            w: Array2::zeros((rows, input_dim)),
            u: Array2::zeros((rows, hidden_dim)),
            b: Array1::zeros(rows),
        }
    }

    /// Glorot-initialized gate blocks, zero biases.
    pub fn init(kind: CellKind, input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cell = Self::zeros(kind, input_dim, hidden_dim);
        let hd = hidden_dim;
        for g in 0..kind.gate_blocks() {
            let wg: Array2<T> = glorot(hd, input_dim, &mut rng);
            cell.w.slice_mut(s![g * hd..(g + 1) * hd, ..]).assign(&wg);
            let ug: Array2<T> = glorot(hd, hd, &mut rng);
            cell.u.slice_mut(s![g * hd..(g + 1) * hd, ..]).assign(&ug);
        }
        cell
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.input_dim, self.hidden_dim)
    }

    fn check(&self, seq: &[Array1<T>], h0: &Array1<T>) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::dim("recurrent input sequence is empty"));
        }
        if h0.len() != self.hidden_dim {
            return Err(Error::dim(format!(
                "initial state has {} entries, cell has {} hidden units",
                h0.len(),
                self.hidden_dim
            )));
        }
        if let Some(x) = seq.iter().find(|x| x.len() != self.input_dim) {
            return Err(Error::dim(format!(
                "cell expects {}-dim inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Runs the cell over `seq` from hidden state `h0` (and zero cell state
    /// for LSTM). Returns the final hidden state and every hidden state.
    pub fn forward(&self, seq: &[Array1<T>], h0: &Array1<T>) -> Result<(Array1<T>, Vec<Array1<T>>)> {
        let trace = self.forward_trace(seq, h0)?;
        Ok((trace.final_hidden().clone(), trace.hidden))
    }

    pub fn forward_trace(&self, seq: &[Array1<T>], h0: &Array1<T>) -> Result<RecurrentTrace<T>> {
        self.check(seq, h0)?;
        let hd = self.hidden_dim;
        let mut h = h0.clone();
        let mut c = Array1::zeros(hd);
        let mut steps = Vec::with_capacity(seq.len());
        let mut hidden = Vec::with_capacity(seq.len());
        for x in seq {
            let (h_new, c_new, cache) = match self.kind {
                CellKind::Gru => self.gru_step(x, &h),
                CellKind::Lstm => self.lstm_step(x, &h, &c),
            };
            steps.push(cache);
            hidden.push(h_new.clone());
            h = h_new;
            c = c_new;
        }
        Ok(RecurrentTrace { steps, hidden })
    }

    fn gru_step(&self, x: &Array1<T>, h: &Array1<T>) -> (Array1<T>, Array1<T>, StepCache<T>) {
        let hd = self.hidden_dim;
        let wx = self.w.dot(x);
        let uh = self.u.slice(s![0..2 * hd, ..]).dot(h);
        let mut gates = Array1::zeros(3 * hd);
        for j in 0..2 * hd {
            gates[j] = sigmoid(wx[j] + uh[j] + self.b[j]);
        }
        let rh: Array1<T> = Array1::from_shape_fn(hd, |j| gates[hd + j] * h[j]);
        let un = self.u.slice(s![2 * hd..3 * hd, ..]).dot(&rh);
        for j in 0..hd {
            gates[2 * hd + j] = (wx[2 * hd + j] + un[j] + self.b[2 * hd + j]).tanh();
        }
        let h_new = Array1::from_shape_fn(hd, |j| {
            let z = gates[j];
            (T::one() - z) * h[j] + z * gates[2 * hd + j]
        });
        let cache = StepCache {
            x: x.clone(),
            h_prev: h.clone(),
            c_prev: Array1::zeros(0),
            gates,
            aux: rh,
        };
        (h_new, Array1::zeros(0), cache)
    }

    fn lstm_step(
        &self,
        x: &Array1<T>,
        h: &Array1<T>,
        c: &Array1<T>,
    ) -> (Array1<T>, Array1<T>, StepCache<T>) {
        let hd = self.hidden_dim;
        let mut gates = self.w.dot(x) + self.u.dot(h) + &self.b;
        for j in 0..3 * hd {
            gates[j] = sigmoid(gates[j]);
        }
        for j in 3 * hd..4 * hd {
            gates[j] = gates[j].tanh();
        }
        let c_new = Array1::from_shape_fn(hd, |j| gates[hd + j] * c[j] + gates[j] * gates[3 * hd + j]);
        let tc = c_new.mapv(|v| v.tanh());
        let h_new = Array1::from_shape_fn(hd, |j| gates[2 * hd + j] * tc[j]);
        let cache = StepCache {
            x: x.clone(),
            h_prev: h.clone(),
            c_prev: c.clone(),
            gates,
            aux: tc,
        };
        (h_new, c_new, cache)
    }

    /// Backpropagates `d_final` (gradient of the loss with respect to the
    /// last hidden state) through `trace`, accumulating parameter gradients
    /// into `grad`. Returns the gradients with respect to `h0` and to each
    /// input.
    pub fn backward(
        &self,
        trace: &RecurrentTrace<T>,
        d_final: ArrayView1<T>,
        grad: &mut RecurrentCell<T>,
    ) -> (Array1<T>, Vec<Array1<T>>) {
        let hd = self.hidden_dim;
        let mut dh = d_final.to_owned();
        let mut dc: Array1<T> = Array1::zeros(hd);
        let mut dxs = vec![Array1::zeros(self.input_dim); trace.steps.len()];
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let (dh_prev, dc_prev, dx) = match self.kind {
                CellKind::Gru => self.gru_backward(step, &dh, grad),
                CellKind::Lstm => self.lstm_backward(step, &dh, &dc, grad),
            };
            dxs[t] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }
        (dh, dxs)
    }

    fn gru_backward(
        &self,
        step: &StepCache<T>,
        dh: &Array1<T>,
        grad: &mut RecurrentCell<T>,
    ) -> (Array1<T>, Array1<T>, Array1<T>) {
        let hd = self.hidden_dim;
        let one = T::one();
        let g = &step.gates;
        let h = &step.h_prev;
        let mut da = Array1::zeros(3 * hd);
        let mut dh_prev = Array1::zeros(hd);
        for j in 0..hd {
            let (z, n) = (g[j], g[2 * hd + j]);
            da[j] = dh[j] * (n - h[j]) * z * (one - z);
            da[2 * hd + j] = dh[j] * z * (one - n * n);
            dh_prev[j] = dh[j] * (one - z);
        }
        let un = self.u.slice(s![2 * hd..3 * hd, ..]);
        let d_rh = un.t().dot(&da.slice(s![2 * hd..3 * hd]));
        for j in 0..hd {
            let r = g[hd + j];
            da[hd + j] = d_rh[j] * h[j] * r * (one - r);
            dh_prev[j] += d_rh[j] * r;
        }

        add_outer(&mut grad.w, da.view(), step.x.view());
        {
            let mut gu = grad.u.slice_mut(s![0..2 * hd, ..]);
            for (mut row, &a) in gu.rows_mut().into_iter().zip(da.slice(s![0..2 * hd]).iter()) {
                row.zip_mut_with(h, |r, &hv| *r += a * hv);
            }
        }
        {
            let mut gu = grad.u.slice_mut(s![2 * hd..3 * hd, ..]);
            for (mut row, &a) in gu.rows_mut().into_iter().zip(da.slice(s![2 * hd..]).iter()) {
                row.zip_mut_with(&step.aux, |r, &v| *r += a * v);
            }
        }
        grad.b += &da;
        dh_prev += &self.u.slice(s![0..2 * hd, ..]).t().dot(&da.slice(s![0..2 * hd]));
        let dx = self.w.t().dot(&da);
        (dh_prev, Array1::zeros(0), dx)
    }

    fn lstm_backward(
        &self,
        step: &StepCache<T>,
        dh: &Array1<T>,
        dc: &Array1<T>,
        grad: &mut RecurrentCell<T>,
    ) -> (Array1<T>, Array1<T>, Array1<T>) {
        let hd = self.hidden_dim;
        let one = T::one();
        let g = &step.gates;
        let tc = &step.aux;
        let mut da = Array1::zeros(4 * hd);
        let mut dc_prev = Array1::zeros(hd);
        for j in 0..hd {
            let (i, f, o, gg) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
            let dct = dc[j] + dh[j] * o * (one - tc[j] * tc[j]);
            da[j] = dct * gg * i * (one - i);
            da[hd + j] = dct * step.c_prev[j] * f * (one - f);
            da[2 * hd + j] = dh[j] * tc[j] * o * (one - o);
            da[3 * hd + j] = dct * i * (one - gg * gg);
            dc_prev[j] = dct * f;
        }
        add_outer(&mut grad.w, da.view(), step.x.view());
        add_outer(&mut grad.u, da.view(), step.h_prev.view());
        grad.b += &da;
        let dh_prev = self.u.t().dot(&da);
        let dx = self.w.t().dot(&da);
        (dh_prev, dc_prev, dx)
    }
}

impl<T: Real> Parameterized<T> for RecurrentCell<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.w
            .iter()
            .chain(self.u.iter())
            .chain(self.b.iter())
            .for_each(|&v| f(v));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .for_each(f);
    }
}
