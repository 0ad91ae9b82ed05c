use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{minibatches, Activation, Adam, DenseLayer, Parameterized, TrainConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One encoder/decoder pair trained to reproduce its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AutoencoderPair<T> {
    pub encoder: DenseLayer<T>,
    pub decoder: DenseLayer<T>,
}

impl<T: Real> AutoencoderPair<T> {
    /// Glorot-initialized sigmoid pair, seeded.
    pub fn init(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = DenseLayer::glorot(in_dim, out_dim, Activation::Sigmoid, &mut rng);
        let decoder = DenseLayer::glorot(out_dim, in_dim, Activation::Sigmoid, &mut rng);
        AutoencoderPair { encoder, decoder }
    }

    pub fn zeros_like(&self) -> Self {
        AutoencoderPair {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn reconstruct(&self, x: ArrayView1<T>) -> Array1<T> {
        self.decoder.forward(self.encoder.forward(x).view())
    }

    /// Mean squared reconstruction error over `samples` (averaged over
    /// samples and dimensions) and its gradient.
    pub fn loss_and_grad(&self, samples: &[&Array1<T>]) -> (T, Self) {
        let mut grad = self.zeros_like();
        let mut loss = T::zero();
        let norm = T::of_usize(samples.len() * self.encoder.in_dim());
        let two = T::lit(2.0);
        for x in samples {
            let code = self.encoder.forward(x.view());
            let out = self.decoder.forward(code.view());
            let diff = &out - *x;
            loss += diff.iter().map(|&d| d * d).sum::<T>();
            let dout = diff.mapv(|d| two * d / norm);
            let dcode = self
                .decoder
                .backward(code.view(), out.view(), dout.view(), &mut grad.decoder);
            self.encoder
                .backward(x.view(), code.view(), dcode.view(), &mut grad.encoder);
        }
        (loss / norm, grad)
    }

    pub fn loss(&self, samples: &[Array1<T>]) -> T {
        let norm = T::of_usize(samples.len() * self.encoder.in_dim());
        samples
            .iter()
            .map(|x| {
                let d = self.reconstruct(x.view()) - x;
                d.iter().map(|&v| v * v).sum::<T>()
            })
            .sum::<T>()
            / norm
    }
}

impl<T: Real> Parameterized<T> for AutoencoderPair<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.encoder.visit(f);
        self.decoder.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder<T> {
    pub pair: AutoencoderPair<T>,
    /// Training-set reconstruction loss after each epoch.
    pub losses: Vec<f64>,
}

/// Trains one autoencoder layer on `data` by minibatch gradient descent.
pub fn train_autoencoder_layer<T: Real>(
    data: &[Array1<T>],
    in_dim: usize,
    out_dim: usize,
    cfg: &TrainConfig,
) -> Result<TrainedAutoencoder<T>> {
    cfg.validate("sae.train")?;
    if data.is_empty() {
        return Err(Error::EmptySeries);
    }
    if out_dim == 0 || in_dim == 0 {
        return Err(Error::dim("autoencoder dimensions must be positive"));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != in_dim) {
        return Err(Error::dim(format!(
            "autoencoder expects {in_dim}-dim inputs, got {}",
            bad.len()
        )));
    }

    let mut pair = AutoencoderPair::init(in_dim, out_dim, cfg.seed);
    let mut opt = Adam::new(pair.param_count(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for batch in minibatches(data.len(), cfg.batch_size, &mut rng) {
            let samples: Vec<&Array1<T>> = batch.iter().map(|&i| &data[i]).collect();
            let (_, grad) = pair.loss_and_grad(&samples);
            opt.step(&mut pair, &grad);
        }
        let loss = pair.loss(data).to_f64_lossy();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        losses.push(loss);
    }
    Ok(TrainedAutoencoder { pair, losses })
}

/// Greedily pretrained stack of autoencoders. Only the encoders are used
/// for feature extraction; decoders are kept for reconstruction checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SaeStack<T> {
    pub dims: Vec<usize>,
    pub encoders: Vec<DenseLayer<T>>,
    pub decoders: Vec<DenseLayer<T>>,
}

impl<T: Real> SaeStack<T> {
    /// Untrained stack with the same initialization `build_sae` starts from.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let (encoders, decoders) = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let p = AutoencoderPair::<T>::init(w[0], w[1], layer_seed(seed, i));
                (p.encoder, p.decoder)
            })
            .unzip();
        Ok(SaeStack {
            dims: dims.to_vec(),
            encoders,
            decoders,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn code_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn encode(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut h = x.to_owned();
        for layer in &self.encoders {
            h = layer.forward(h.view());
        }
        h
    }

    /// Full encode-decode pass through every layer.
    pub fn reconstruct(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut h = self.encode(x);
        for layer in self.decoders.iter().rev() {
            h = layer.forward(h.view());
        }
        h
    }

    pub fn reconstruction_mse(&self, data: &[Array1<T>]) -> T {
        let norm = T::of_usize(data.len() * self.input_dim());
        data.iter()
            .map(|x| {
                let d = self.reconstruct(x.view()) - x;
                d.iter().map(|&v| v * v).sum::<T>()
            })
            .sum::<T>()
            / norm
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() != 4 {
        return Err(Error::config(
            "sae.dims",
            format!("expected input plus three hidden sizes, got {} entries", dims.len()),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::config("sae.dims", "sizes must be positive"));
    }
    Ok(())
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_add(1000 * (layer as u64 + 1))
}

/// Greedy layer-wise pretraining: layer 1 on the raw windows, each later
/// layer on the codes of the one before.
pub fn build_sae<T: Real>(windows: &[Array1<T>], dims: &[usize], cfg: &TrainConfig) -> Result<SaeStack<T>> {
    check_dims(dims)?;
    let mut encoders = Vec::new();
    let mut decoders = Vec::new();
    let mut data: Vec<Array1<T>> = windows.to_vec();
    for (i, w) in dims.windows(2).enumerate() {
        let layer_cfg = TrainConfig {
            seed: layer_seed(cfg.seed, i),
            ..cfg.clone()
        };
        let trained = train_autoencoder_layer(&data, w[0], w[1], &layer_cfg)?;
        data = data
            .iter()
            .map(|x| trained.pair.encoder.forward(x.view()))
            .collect();
        encoders.push(trained.pair.encoder);
        decoders.push(trained.pair.decoder);
    }
    Ok(SaeStack {
        dims: dims.to_vec(),
        encoders,
        decoders,
    })
}
