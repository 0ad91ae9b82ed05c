use std::path::Path;

use log::debug;
use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{minibatches, Activation, Adam, CellKind, DenseLayer, Parameterized, RecurrentCell, TrainConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::timeseries::Scaler;

/// Bumped whenever the persisted model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Sequences of consecutive window codes. Sample `j` is
/// `codes[j..j + seq_len]` and predicts `targets[j + seq_len - 1]`, the
/// target of its latest window.
#[derive(Debug, Clone)]
pub struct CodeSequences<T> {
    pub codes: Vec<Array1<T>>,
    pub targets: Vec<T>,
    pub seq_len: usize,
}

impl<T: Real> CodeSequences<T> {
    pub fn new(codes: Vec<Array1<T>>, targets: Vec<T>, seq_len: usize) -> Result<Self> {
        if codes.len() != targets.len() {
            return Err(Error::dim(format!(
                "{} codes but {} targets",
                codes.len(),
                targets.len()
            )));
        }
        if seq_len == 0 {
            return Err(Error::config("model.seq_len", "must be >= 1"));
        }
        if codes.len() < seq_len {
            return Err(Error::TooShort {
                needed: seq_len,
                got: codes.len(),
            });
        }
        if let Some(d) = codes.first().map(Array1::len) {
            if codes.iter().any(|c| c.len() != d) {
                return Err(Error::dim("codes differ in length"));
            }
        }
        Ok(CodeSequences {
            codes,
            targets,
            seq_len,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len() + 1 - self.seq_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn code_dim(&self) -> usize {
        self.codes[0].len()
    }

    pub fn sequence(&self, j: usize) -> &[Array1<T>] {
        &self.codes[j..j + self.seq_len]
    }

    pub fn target(&self, j: usize) -> T {
        self.targets[j + self.seq_len - 1]
    }
}

/// Recurrent cell followed by a linear read-out of the last hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ForecastNet<T> {
    pub cell: RecurrentCell<T>,
    pub head: DenseLayer<T>,
}

impl<T: Real> ForecastNet<T> {
    pub fn init(kind: CellKind, input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let cell = RecurrentCell::init(kind, input_dim, hidden_dim, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let head = DenseLayer::glorot(hidden_dim, 1, Activation::Identity, &mut rng);
        ForecastNet { cell, head }
    }

    pub fn zeros_like(&self) -> Self {
        ForecastNet {
            cell: self.cell.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn predict(&self, seq: &[Array1<T>]) -> Result<T> {
        let h0 = Array1::zeros(self.cell.hidden_dim);
        let (h, _) = self.cell.forward(seq, &h0)?;
        Ok(self.head.forward(h.view())[0])
    }

    /// Mean squared error over the samples `idx` of `data`, and its gradient.
    pub fn loss_and_grad(&self, data: &CodeSequences<T>, idx: &[usize]) -> Result<(T, Self)> {
        let mut grad = self.zeros_like();
        let mut loss = T::zero();
        let norm = T::of_usize(idx.len());
        let two = T::lit(2.0);
        let h0 = Array1::zeros(self.cell.hidden_dim);
        for &j in idx {
            let trace = self.cell.forward_trace(data.sequence(j), &h0)?;
            let h = trace.final_hidden();
            let y = self.head.forward(h.view());
            let err = y[0] - data.target(j);
            loss += err * err;
            let dy = Array1::from_elem(1, two * err / norm);
            let dh = self.head.backward(h.view(), y.view(), dy.view(), &mut grad.head);
            self.cell.backward(&trace, dh.view(), &mut grad.cell);
        }
        Ok((loss / norm, grad))
    }

    pub fn mse(&self, data: &CodeSequences<T>, idx: impl Iterator<Item = usize>) -> Result<T> {
        let mut total = T::zero();
        let mut n = 0usize;
        for j in idx {
            let e = self.predict(data.sequence(j))? - data.target(j);
            total += e * e;
            n += 1;
        }
        Ok(if n == 0 { T::zero() } else { total / T::of_usize(n) })
    }
}

impl<T: Real> Parameterized<T> for ForecastNet<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.cell.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.cell.visit_mut(f);
        self.head.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPredictor<T> {
    /// Parameters from the epoch with the best monitored loss.
    pub net: ForecastNet<T>,
    /// Mean minibatch loss per epoch.
    pub train_losses: Vec<f64>,
    /// Held-out loss per epoch (empty when nothing is held out).
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
}

/// Trains a recurrent predictor on code sequences by backpropagation
/// through time. The chronological tail (`validation_fraction`) is held
/// out for early stopping; the best parameters seen are returned.
pub fn train_forecaster<T: Real>(
    data: &CodeSequences<T>,
    kind: CellKind,
    hidden_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainedPredictor<T>> {
    cfg.validate("train")?;
    if hidden_dim == 0 {
        return Err(Error::config("model.hidden_dim", "must be >= 1"));
    }
    let n = data.len();
    let n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    let n_train = n - n_val;
    if n_train == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }

    let mut net = ForecastNet::init(kind, data.code_dim(), hidden_dim, cfg.seed);
    let mut opt = Adam::new(net.param_count(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for batch in minibatches(n_train, cfg.batch_size, &mut rng) {
            let (loss, grad) = net.loss_and_grad(data, &batch)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut net, &grad);
        }
        if !net.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        let train_loss = epoch_loss / n_train as f64;
        train_losses.push(train_loss);
        let monitored = if n_val > 0 {
            let v = net.mse(data, n_train..n)?.to_f64_lossy();
            val_losses.push(v);
            v
        } else {
            train_loss
        };
        if monitored < best_loss {
            best_loss = monitored;
            best = net.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                debug!("early stop at epoch {epoch}, best epoch {best_epoch}");
                break;
            }
        }
    }
    if cfg.epochs == 0 {
        best = net;
    }
    Ok(TrainedPredictor {
        net: best,
        train_losses,
        val_losses,
        best_epoch,
    })
}

/// Everything needed to turn recent prices into a forecast `horizon` steps
/// ahead: scaler, autoencoder encoders, recurrent predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ForecastModel<T> {
    pub format_version: u32,
    pub window: usize,
    pub horizon: usize,
    pub seq_len: usize,
    pub sae_dims: Vec<usize>,
    pub encoders: Vec<DenseLayer<T>>,
    pub net: ForecastNet<T>,
    pub scaler: Scaler<T>,
    pub exog_scaler: Option<Scaler<T>>,
    /// Hash of the configuration the model was trained under.
    pub config_hash: String,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

impl<T: Real> ForecastModel<T> {
    pub fn cell_kind(&self) -> CellKind {
        self.net.cell.kind
    }

    /// Number of recent samples a forecast consumes.
    pub fn required_history(&self) -> usize {
        self.window + self.seq_len - 1
    }

    pub fn encode(&self, window: ArrayView1<T>) -> Array1<T> {
        let mut h = window.to_owned();
        for layer in &self.encoders {
            h = layer.forward(h.view());
        }
        h
    }

    /// Forecast in scaled units from already-scaled history (and scaled
    /// exogenous history, when the model uses one).
    pub fn forecast_scaled(&self, history: &[T], exogenous: Option<&[T]>) -> Result<T> {
        let need = self.required_history();
        if history.len() != need {
            return Err(Error::dim(format!(
                "forecast needs {need} recent values, got {}",
                history.len()
            )));
        }
        match (exogenous, self.exog_scaler.is_some()) {
            (Some(e), true) if e.len() == need => {}
            (None, false) => {}
            (Some(e), true) => {
                return Err(Error::dim(format!(
                    "exogenous history needs {need} values, got {}",
                    e.len()
                )))
            }
            (None, true) => return Err(Error::dim("model expects an exogenous channel")),
            (Some(_), false) => return Err(Error::dim("model has no exogenous channel")),
        }
        let codes: Vec<Array1<T>> = (0..self.seq_len)
            .map(|s| {
                let mut w = history[s..s + self.window].to_vec();
                if let Some(e) = exogenous {
                    w.extend_from_slice(&e[s..s + self.window]);
                }
                self.encode(ArrayView1::from(&w))
            })
            .collect();
        self.net.predict(&codes)
    }

    /// Forecast in price units from the most recent `required_history()`
    /// values (in price units).
    pub fn forecast(&self, history: &[T], exogenous: Option<&[T]>) -> Result<T> {
        let scaled = self.scaler.transform_all(history);
        let exo_scaled = match (exogenous, &self.exog_scaler) {
            (Some(e), Some(sc)) => Some(sc.transform_all(e)),
            (Some(e), None) => Some(e.to_vec()),
            (None, _) => None,
        };
        let y = self.forecast_scaled(&scaled, exo_scaled.as_deref())?;
        Ok(self.scaler.inverse(y))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("unreadable model header: {e}")))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                header.format_version
            )));
        }
        let model: Self =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        model.check_consistency()?;
        Ok(model)
    }

    fn check_consistency(&self) -> Result<()> {
        let chain_ok = self.encoders.len() + 1 == self.sae_dims.len()
            && self
                .encoders
                .iter()
                .zip(self.sae_dims.windows(2))
                .all(|(l, d)| l.in_dim() == d[0] && l.out_dim() == d[1])
            && self.net.cell.input_dim == *self.sae_dims.last().unwrap_or(&0)
            && self.net.head.in_dim() == self.net.cell.hidden_dim
            && self.net.head.out_dim() == 1;
        if !chain_ok || self.seq_len == 0 || self.window == 0 {
            return Err(Error::ModelFormat("inconsistent layer dimensions".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_sequences(n: usize) -> CodeSequences<f64> {
        let codes = (0..n)
            .map(|i| Array1::from(vec![(i as f64 * 0.3).sin(), (i as f64 * 0.3).cos()]))
            .collect();
        let targets = (0..n).map(|i| 0.5 + 0.4 * ((i + 2) as f64 * 0.3).sin()).collect();
        CodeSequences::new(codes, targets, 4).unwrap()
    }

    #[test]
    fn sequence_indexing() {
        let d = toy_sequences(10);
        assert_eq!(d.len(), 7);
        assert_eq!(d.sequence(0).len(), 4);
        assert_eq!(d.target(0), d.targets[3]);
        assert!(CodeSequences::new(vec![Array1::<f64>::zeros(2)], vec![0.0], 2).is_err());
        assert!(CodeSequences::new(vec![Array1::<f64>::zeros(2)], vec![], 1).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let d = toy_sequences(120);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.01,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_forecaster(&d, CellKind::Gru, 8, &cfg).unwrap();
        let b = train_forecaster(&d, CellKind::Gru, 8, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.train_losses, b.train_losses);
        assert!(a.train_losses.last().unwrap() < &a.train_losses[0]);
        let lstm = train_forecaster(&d, CellKind::Lstm, 8, &cfg).unwrap();
        assert!(lstm.train_losses.last().unwrap() < &lstm.train_losses[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut d = toy_sequences(30);
        d.targets[10] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 3,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_forecaster(&d, CellKind::Gru, 4, &cfg),
            Err(Error::Divergence { .. })
        ));
    }
}
