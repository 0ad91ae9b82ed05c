//! Stacked autoencoder features and recurrent predictors, trained with
//! hand-derived gradients and an adaptive-moment optimizer.

mod autoencoder;
mod forecaster;
mod recurrent;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use autoencoder::{build_sae, train_autoencoder_layer, AutoencoderPair, SaeStack, TrainedAutoencoder};
pub use forecaster::{
    train_forecaster, CodeSequences, ForecastModel, ForecastNet, TrainedPredictor,
    MODEL_FORMAT_VERSION,
};
pub use recurrent::{CellKind, RecurrentCell, RecurrentTrace};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// Anything with a flat list of trainable scalars. Gradients are stored in
/// a value of the same type, so the two visit in the same order.
pub trait Parameterized<T: Real> {
    fn visit(&self, f: &mut dyn FnMut(T));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit(&mut |v| out.push(v));
        out
    }

    fn assign(&mut self, flat: &[T]) {
        let mut it = flat.iter();
        self.visit_mut(&mut |p| *p = *it.next().expect("flat parameter vector too short"));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |v| ok &= v.is_finite());
        ok
    }
}

/// Uniform Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-limit..limit)))
}

/// Fully connected layer `y = act(W x + b)` with `W` of shape out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        DenseLayer {
            weights: glorot(out_dim, in_dim, rng),
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.out_dim(), self.activation)
    }

    pub fn forward(&self, x: ArrayView1<T>) -> Array1<T> {
        let act = self.activation;
        let mut z = self.weights.dot(&x) + &self.bias;
        z.mapv_inplace(|v| act.apply(v));
        z
    }

    pub fn checked_forward(&self, x: &[T]) -> Result<Array1<T>> {
        if x.len() != self.in_dim() {
            return Err(Error::dim(format!(
                "layer expects {} inputs, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(self.forward(ArrayView1::from(x)))
    }

    /// Accumulates parameter gradients into `grad` given the input `x`, the
    /// forward output `y` and the upstream gradient `dy`; returns `dL/dx`.
    pub fn backward(
        &self,
        x: ArrayView1<T>,
        y: ArrayView1<T>,
        dy: ArrayView1<T>,
        grad: &mut DenseLayer<T>,
    ) -> Array1<T> {
        let act = self.activation;
        let dz: Array1<T> = dy
            .iter()
            .zip(y.iter())
            .map(|(&d, &o)| d * act.derivative_from_output(o))
            .collect();
        add_outer(&mut grad.weights, dz.view(), x);
        grad.bias += &dz;
        self.weights.t().dot(&dz)
    }
}

impl<T: Real> Parameterized<T> for DenseLayer<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.weights.iter().chain(self.bias.iter()).for_each(|&v| f(v));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(f);
    }
}

/// `m += a b^T`.
pub(crate) fn add_outer<T: Real>(m: &mut Array2<T>, a: ArrayView1<T>, b: ArrayView1<T>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a.iter()) {
        if ai == T::zero() {
            continue;
        }
        row.zip_mut_with(&b, |r, &bj| *r += ai * bj);
    }
}

/// Optimizer and schedule settings shared by autoencoder and predictor
/// training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    /// Chronological tail of the training samples held out for early
    /// stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if self.batch_size == 0 {
            return Err(Error::config(field("batch_size"), "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(field("learning_rate"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config(field("beta1"), "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(field("beta2"), "must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config(field("epsilon"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(field("validation_fraction"), "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Adam {
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            epsilon: T::lit(cfg.epsilon),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    pub fn step<P: Parameterized<T>>(&mut self, params: &mut P, grads: &P) {
        let g = grads.flatten();
        debug_assert_eq!(g.len(), self.m.len());
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let mut i = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        params.visit_mut(&mut |p| {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            i += 1;
        });
    }
}

/// Splits `0..n` into shuffled minibatches.
pub(crate) fn minibatches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn zero_layer_outputs_activation_of_zero() {
        let layer = DenseLayer::<f64>::zeros(3, 2, Activation::Sigmoid);
        assert_eq!(layer.forward(array![1.0, -2.0, 3.0].view()), array![0.5, 0.5]);
        let layer = DenseLayer::<f64>::zeros(3, 2, Activation::Tanh);
        assert_eq!(layer.forward(array![1.0, -2.0, 3.0].view()), array![0.0, 0.0]);
        assert!(layer.checked_forward(&[1.0]).is_err());
    }

    #[test]
    fn flatten_assign_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::<f64>::glorot(4, 3, Activation::Tanh, &mut rng);
        assert_eq!(layer.param_count(), 15);
        let flat = layer.flatten();
        let mut other = layer.zeros_like();
        other.assign(&flat);
        assert_eq!(other, layer);
        let limit = (6.0f64 / 7.0).sqrt();
        assert!(flat[..12].iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // f(w) = sum (w - 3)^2
        let mut layer = DenseLayer::<f64>::zeros(2, 1, Activation::Identity);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut opt = Adam::new(layer.param_count(), &cfg);
        for _ in 0..500 {
            let mut g = layer.zeros_like();
            let flat: Vec<f64> = layer.flatten().iter().map(|w| 2.0 * (w - 3.0)).collect();
            g.assign(&flat);
            opt.step(&mut layer, &g);
        }
        assert!(layer.flatten().iter().all(|w| (w - 3.0).abs() < 1e-2));
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        match bad.validate("train") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.learning_rate"),
            other => panic!("{other:?}"),
        }
    }
}
