//! Electricity price forecasting with adaptive noise reduction.
//!
//! The pipeline decomposes a price series with CEEMDAN, classifies the modes
//! by permutation entropy, soft-thresholds the noisy ones, extracts features
//! with a stacked autoencoder and forecasts with a GRU (or LSTM) predictor.
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the double-precision instantiations used by the CLI.

pub mod config;
pub mod denoise;
pub mod emd;
pub mod error;
pub mod eval;
pub mod neural;
pub mod pipeline;
pub mod scalar;
pub mod synthetic;
pub mod timeseries;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type TimeSeries64 = timeseries::TimeSeries<f64>;
pub type Scaler64 = timeseries::Scaler<f64>;
pub type WindowedDataset64 = timeseries::WindowedDataset<f64>;
pub type Decomposition64 = emd::Decomposition<f64>;
pub type SaeStack64 = neural::SaeStack<f64>;
pub type ForecastModel64 = neural::ForecastModel<f64>;
pub type PreparedData64 = pipeline::PreparedData<f64>;
pub type BenchmarkOutput64 = pipeline::BenchmarkOutput<f64>;
