use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_max_imfs, emd_decompose, is_siftable, sift_imf, Decomposition, Imf, SiftSettings,
    MIN_SIGNAL_LEN,
};
use crate::error::{Error, Result};
use crate::scalar::{std_dev, Real};

/// How the noise amplitude evolves across CEEMDAN stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScalePolicy {
    /// Stage `k` uses `noise_scale * std(r_k)`.
    #[default]
    ResidueStd,
    /// Every stage uses `noise_scale * std(signal)`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeemdanConfig {
    /// Number of noise realizations averaged per stage.
    pub ensemble_size: usize,
    /// Noise amplitude as a fraction of the signal (or residue) standard
    /// deviation.
    pub noise_scale: f64,
    pub scale_policy: NoiseScalePolicy,
    pub seed: u64,
    /// `None` selects `floor(log2 n) - 1`.
    pub max_imfs: Option<usize>,
    pub sift: SiftSettings,
}

impl Default for CeemdanConfig {
    fn default() -> Self {
        CeemdanConfig {
            ensemble_size: 100,
            noise_scale: 0.2,
            scale_policy: NoiseScalePolicy::ResidueStd,
            seed: 0,
            max_imfs: None,
            sift: SiftSettings::default(),
        }
    }
}

impl CeemdanConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::config(format!("{prefix}.ensemble_size"), "must be >= 1"));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) {
            return Err(Error::config(format!("{prefix}.noise_scale"), "must be > 0"));
        }
        if self.max_imfs == Some(0) {
            return Err(Error::config(format!("{prefix}.max_imfs"), "must be >= 1"));
        }
        self.sift.validate(&format!("{prefix}.sift"))
    }
}

/// Unit-variance Gaussian noise for realization `i`, drawn from its own
/// substream so the ensemble is identical however it is scheduled.
fn noise_realization<T: Real>(seed: u64, i: usize, n: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        })
        .collect()
}

/// Ensemble average of the first EMD mode of `base + scale * noise_i` over
/// all realizations. A realization without a siftable mode contributes a
/// zero mode (its input passes through to its residue). Returns `None`
/// when no realization produced a mode.
fn average_first_mode<T: Real>(
    base: &[T],
    noises: &[Option<&[T]>],
    scale: T,
    sift: &SiftSettings,
) -> Option<Vec<T>> {
    let modes: Vec<Option<Vec<T>>> = noises
        .par_iter()
        .map(|noise| {
            let perturbed: Vec<T> = match noise {
                Some(w) => base.iter().zip(*w).map(|(&b, &w)| b + scale * w).collect(),
                None => base.to_vec(),
            };
            sift_imf(&perturbed, sift).ok().map(|(imf, _)| imf)
        })
        .collect();

    let failed = modes.iter().filter(|m| m.is_none()).count();
    if failed == modes.len() {
        return None;
    }
    if failed > 0 {
        debug!("{failed} of {} realizations had no siftable mode", modes.len());
    }
    let mut acc = vec![T::zero(); base.len()];
    // Index-ordered summation keeps the result independent of thread count.
    for m in modes.iter().flatten() {
        for (a, &v) in acc.iter_mut().zip(m) {
            *a += v;
        }
    }
    let count = T::of_usize(modes.len());
    for a in &mut acc {
        *a /= count;
    }
    Some(acc)
}

/// CEEMDAN decomposition.
///
/// Stage 1 averages the first EMD mode of `x + eps_0 w_i` over the
/// ensemble. Stage `k + 1` averages the first mode of `r_k + eps_k E_k(w_i)`,
/// where `E_k(w_i)` is the `k`-th EMD mode of the `i`-th noise realization
/// (computed once up front) and `r_k = r_{k-1} - IMF_k`. Decomposition stops
/// when the residue is no longer siftable or `max_imfs` is reached, so the
/// IMFs plus residue always reproduce the input.
pub fn ceemdan_decompose<T: Real>(signal: &[T], config: &CeemdanConfig) -> Result<Decomposition<T>> {
    let n = signal.len();
    if n < MIN_SIGNAL_LEN {
        return Err(Error::TooShort {
            needed: MIN_SIGNAL_LEN,
            got: n,
        });
    }
    config.validate("ceemdan")?;
    let max_imfs = config.max_imfs.unwrap_or_else(|| default_max_imfs(n));

    let mut residue = signal.to_vec();
    let mut imfs: Vec<Imf<T>> = Vec::new();
    if !is_siftable(&residue) {
        return Ok(Decomposition { imfs, residue });
    }

    let raw_noise: Vec<Vec<T>> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|i| noise_realization(config.seed, i, n))
        .collect();
    // Modes E_1..E_{max_imfs-1} of every realization are needed for stages
    // 2..max_imfs.
    let noise_modes: Vec<Vec<Vec<T>>> = raw_noise
        .par_iter()
        .map(|w| {
            emd_decompose(w, max_imfs.saturating_sub(1), &config.sift)
                .map(|d| d.imfs.into_iter().map(|m| m.values).collect())
                .unwrap_or_default()
        })
        .collect();

    let eps0 = T::lit(config.noise_scale);
    let signal_std = std_dev(signal);

    while imfs.len() < max_imfs && is_siftable(&residue) {
        let stage = imfs.len();
        let (noises, scale): (Vec<Option<&[T]>>, T) = if stage == 0 {
            (
                raw_noise.iter().map(|w| Some(w.as_slice())).collect(),
                eps0 * signal_std,
            )
        } else {
            let scale = match config.scale_policy {
                NoiseScalePolicy::ResidueStd => eps0 * std_dev(&residue),
                NoiseScalePolicy::Fixed => eps0 * signal_std,
            };
            (
                noise_modes
                    .iter()
                    .map(|modes| modes.get(stage - 1).map(|m| m.as_slice()))
                    .collect(),
                scale,
            )
        };

        let Some(imf) = average_first_mode(&residue, &noises, scale, &config.sift) else {
            break;
        };
        for (r, &v) in residue.iter_mut().zip(&imf) {
            *r -= v;
        }
        imfs.push(Imf {
            index: stage + 1,
            values: imf,
        });
    }

    Ok(Decomposition { imfs, residue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emd::zero_crossings;
    use std::f64::consts::PI;

    fn small_config(seed: u64) -> CeemdanConfig {
        CeemdanConfig {
            ensemble_size: 20,
            seed,
            ..CeemdanConfig::default()
        }
    }

    fn completeness_error(x: &[f64], d: &Decomposition<f64>) -> f64 {
        d.reconstruct()
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn reconstructs_a_multitone_signal() {
        let x: Vec<f64> = (0..512)
            .map(|t| {
                let t = t as f64 / 512.0;
                (2.0 * PI * 40.0 * t).sin() + 0.5 * (2.0 * PI * 6.0 * t).sin() + 3.0 * t
            })
            .collect();
        let d = ceemdan_decompose(&x, &small_config(7)).unwrap();
        assert!(d.num_imfs() >= 2);
        assert!(completeness_error(&x, &d) < 1e-8 * std_dev(&x));
        let zc: Vec<usize> = d.imfs.iter().map(|m| zero_crossings(&m.values)).collect();
        assert!(zc[0] >= zc[1], "{zc:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let x: Vec<f64> = (0..256).map(|t| ((t * t) as f64 * 0.001).sin()).collect();
        let a = ceemdan_decompose(&x, &small_config(3)).unwrap();
        let b = ceemdan_decompose(&x, &small_config(3)).unwrap();
        assert_eq!(a, b);
        let c = ceemdan_decompose(&x, &small_config(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn monotone_input_passes_through() {
        let x: Vec<f64> = (0..64).map(|i| 0.5 * i as f64 + 2.0).collect();
        let d = ceemdan_decompose(&x, &small_config(0)).unwrap();
        assert_eq!(d.num_imfs(), 0);
        assert_eq!(d.residue, x);
    }

    #[test]
    fn respects_imf_cap() {
        let x: Vec<f64> = (0..256).map(|t| (t as f64 * 0.7).sin() + (t as f64 * 0.05).sin()).collect();
        let cfg = CeemdanConfig {
            max_imfs: Some(2),
            ..small_config(1)
        };
        let d = ceemdan_decompose(&x, &cfg).unwrap();
        assert_eq!(d.num_imfs(), 2);
        assert!(completeness_error(&x, &d) < 1e-8 * std_dev(&x));
    }

    #[test]
    fn invalid_configs() {
        let x = vec![0.0f64; 16];
        let bad = CeemdanConfig {
            ensemble_size: 0,
            ..CeemdanConfig::default()
        };
        assert!(matches!(ceemdan_decompose(&x, &bad), Err(Error::Config { .. })));
        let bad = CeemdanConfig {
            noise_scale: -1.0,
            ..CeemdanConfig::default()
        };
        assert!(matches!(ceemdan_decompose(&x, &bad), Err(Error::Config { .. })));
        assert!(matches!(
            ceemdan_decompose(&x[..4], &CeemdanConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }
}
