//! Seeded synthetic hourly price series: trend, daily and weekly cycles,
//! a persistent AR(1) disturbance and white measurement noise.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub len: usize,
    pub seed: u64,
    pub level: f64,
    /// Added per hour.
    pub trend: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub ar_coefficient: f64,
    pub ar_sigma: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            len: 2048,
            seed: 2024,
            level: 50.0,
            trend: 0.002,
            daily_amplitude: 8.0,
            weekly_amplitude: 4.0,
            ar_coefficient: 0.98,
            ar_sigma: 1.0,
            noise_sigma: 0.5,
        }
    }
}

/// Generates an hourly series starting 2019-01-01 00:00. A load-like
/// exogenous channel (the cycles without the disturbances) is attached.
pub fn generate(cfg: &SyntheticConfig) -> TimeSeries<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ar_noise = Normal::new(0.0, cfg.ar_sigma.max(0.0)).expect("valid sigma");
    let white = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("valid sigma");
    let tau = std::f64::consts::TAU;
    let mut ar = 0.0;
    let mut prices = Vec::with_capacity(cfg.len);
    let mut load = Vec::with_capacity(cfg.len);
    for t in 0..cfg.len {
        let tf = t as f64;
        let cycles = cfg.daily_amplitude * (tau * tf / 24.0).sin()
            + cfg.weekly_amplitude * (tau * tf / 168.0).sin();
        ar = cfg.ar_coefficient * ar + ar_noise.sample(&mut rng);
        prices.push(cfg.level + cfg.trend * tf + cycles + ar + white.sample(&mut rng));
        load.push(1000.0 + 20.0 * cycles);
    }
    let start = NaiveDate::from_ymd_opt(2019, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    TimeSeries::new(prices)
        .with_start(start)
        .with_exogenous(load)
        .expect("equal lengths")
}
