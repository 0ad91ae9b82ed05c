//! Adaptive noise reduction on a CEEMDAN decomposition.
//!
//! IMFs are scanned from high to low frequency; every IMF before the first
//! one whose permutation entropy drops below the threshold is treated as
//! noisy and soft-thresholded with `lambda = sigma * sqrt(2 ln m / ln(k + 1))`,
//! where `m` is the series length, `k` the IMF ordinal and `sigma` the
//! MAD-based noise estimate of that IMF. The clean IMFs and the residue are
//! added back unchanged.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::emd::{ceemdan_decompose, CeemdanConfig, Decomposition, Imf};
use crate::error::{Error, Result, StageExt};
use crate::scalar::{median, Real};
use crate::timeseries::TimeSeries;

/// Ordinal-pattern embedding for permutation entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeConfig {
    pub embedding_dim: usize,
    pub delay: usize,
    /// Divide by `ln(embedding_dim!)` so the entropy lies in `[0, 1]`.
    pub normalize: bool,
}

impl Default for PeConfig {
    fn default() -> Self {
        PeConfig {
            embedding_dim: 4,
            delay: 1,
            normalize: true,
        }
    }
}

impl PeConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(2..=7).contains(&self.embedding_dim) {
            return Err(Error::config(
                format!("{prefix}.embedding_dim"),
                "must be between 2 and 7",
            ));
        }
        if self.delay == 0 {
            return Err(Error::config(format!("{prefix}.delay"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Everything the denoising stage needs besides the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub ceemdan: CeemdanConfig,
    pub pe: PeConfig,
    pub pe_threshold: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            ceemdan: CeemdanConfig::default(),
            pe: PeConfig::default(),
            pe_threshold: 0.7,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        self.ceemdan.validate(&format!("{prefix}.ceemdan"))?;
        self.pe.validate(&format!("{prefix}.pe"))?;
        if !(0.0..=1.0).contains(&self.pe_threshold) {
            return Err(Error::config(
                format!("{prefix}.pe_threshold"),
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Lehmer-code index of the ordinal pattern of `window`. Equal values are
/// ranked by position, earlier first.
fn ordinal_pattern<T: Real>(window: &[T], order: &mut [usize]) -> usize {
    let m = window.len();
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    // Stable sort keeps earlier indices first among ties.
    order.sort_by(|&a, &b| window[a].partial_cmp(&window[b]).expect("finite values"));
    let mut code = 0;
    for i in 0..m {
        let smaller = order[i + 1..].iter().filter(|&&x| x < order[i]).count();
        code = code * (m - i) + smaller;
    }
    code
}

/// Shannon entropy of the ordinal-pattern distribution of `signal`,
/// normalized to `[0, 1]` when `config.normalize` is set.
pub fn permutation_entropy<T: Real>(signal: &[T], config: &PeConfig) -> Result<f64> {
    config.validate("pe")?;
    let (m, tau) = (config.embedding_dim, config.delay);
    let needed = m * tau + 1;
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: signal.len(),
        });
    }
    let span = (m - 1) * tau;
    let count = signal.len() - span;
    let mut counts = vec![0usize; factorial(m)];
    let mut window = vec![T::zero(); m];
    let mut order = vec![0usize; m];
    for start in 0..count {
        for (j, w) in window.iter_mut().enumerate() {
            *w = signal[start + j * tau];
        }
        counts[ordinal_pattern(&window, &mut order)] += 1;
    }
    let total = count as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * (total / c as f64).ln()
        })
        .sum();
    let h = if config.normalize {
        h / (factorial(m) as f64).ln()
    } else {
        h
    };
    Ok(if config.normalize { h.clamp(0.0, 1.0) } else { h.max(0.0) })
}

/// Index (1-based) of the first IMF whose entropy is below `threshold`, or
/// `K + 1` when every IMF is noisy.
pub fn partition_point(pe_values: &[f64], threshold: f64) -> usize {
    pe_values
        .iter()
        .position(|&pe| pe < threshold)
        .map_or(pe_values.len() + 1, |i| i + 1)
}

/// Partition of a decomposition into noisy (`k < partition`) and clean
/// (`k >= partition`) IMFs.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub partition: usize,
    pub pe_values: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn partition_imfs<T: Real>(
    decomp: &Decomposition<T>,
    pe_config: &PeConfig,
    pe_threshold: f64,
) -> Result<Partition> {
    let pe_values = decomp
        .imfs
        .iter()
        .map(|imf| permutation_entropy(&imf.values, pe_config))
        .collect::<Result<Vec<_>>>()?;
    let partition = partition_point(&pe_values, pe_threshold);
    let mut warnings = Vec::new();
    for (i, &pe) in pe_values.iter().enumerate().skip(partition) {
        if pe >= pe_threshold {
            let msg = format!(
                "IMF {} has entropy {pe:.4} above threshold after the partition point {partition}; kept as clean",
                i + 1
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(Partition {
        partition,
        pe_values,
        warnings,
    })
}

/// Robust noise level `median(|w - median(w)|) / 0.6745`.
pub fn robust_sigma<T: Real>(values: &[T]) -> T {
    let med = median(values);
    let dev: Vec<T> = values.iter().map(|&v| (v - med).abs()).collect();
    median(&dev) / T::lit(0.6745)
}

/// `sigma * sqrt(2 ln(m) / ln(k + 1))`.
pub fn threshold_value(sigma: f64, series_len: usize, imf_index: usize) -> f64 {
    let m = series_len as f64;
    let k = imf_index as f64;
    sigma * (2.0 * m.ln() / (k + 1.0).ln()).sqrt()
}

/// Adaptive threshold for one IMF of a series of length `series_len`.
pub fn adaptive_lambda<T: Real>(imf: &Imf<T>, series_len: usize) -> Result<f64> {
    if series_len < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series_len,
        });
    }
    if imf.index == 0 {
        return Err(Error::dim("IMF ordinals start at 1"));
    }
    let sigma = robust_sigma(&imf.values).to_f64_lossy();
    Ok(threshold_value(sigma, series_len, imf.index))
}

/// Soft thresholding: shrink towards zero by `lambda`, zeroing anything
/// smaller in magnitude.
pub fn soft_threshold<T: Real>(values: &[T], lambda: T) -> Vec<T> {
    values
        .iter()
        .map(|&w| {
            if w.abs() >= lambda {
                w.signum() * (w.abs() - lambda)
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Thresholded noisy IMFs plus the untouched clean IMFs and residue.
///
/// `denoised` must hold exactly the `partition - 1` noisy IMFs, in order.
pub fn reconstruct<T: Real>(
    decomp: &Decomposition<T>,
    partition: usize,
    denoised: &[Vec<T>],
) -> Result<Vec<T>> {
    let k = decomp.num_imfs();
    if partition == 0 || partition > k + 1 {
        return Err(Error::dim(format!(
            "partition point {partition} outside [1, {}]",
            k + 1
        )));
    }
    if denoised.len() != partition - 1 {
        return Err(Error::dim(format!(
            "expected {} denoised IMFs for partition point {partition}, got {}",
            partition - 1,
            denoised.len()
        )));
    }
    let n = decomp.signal_len();
    if let Some(bad) = denoised.iter().find(|d| d.len() != n) {
        return Err(Error::dim(format!(
            "denoised IMF has {} samples, series has {n}",
            bad.len()
        )));
    }
    let mut out = decomp.residue.clone();
    let parts = denoised
        .iter()
        .map(Vec::as_slice)
        .chain(decomp.imfs[partition - 1..].iter().map(|m| m.values.as_slice()));
    for part in parts {
        for (o, &v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    Ok(out)
}

/// Human-readable summary of one denoising run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub series_len: usize,
    pub num_imfs: usize,
    pub pe_values: Vec<f64>,
    pub pe_threshold: f64,
    /// 1-based index of the first clean IMF.
    pub partition: usize,
    /// Robust noise level per noisy IMF.
    pub sigmas: Vec<f64>,
    /// Threshold per noisy IMF.
    pub lambdas: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DenoiseReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }
}

/// Denoises an existing decomposition of a series of length
/// `decomp.signal_len()`.
pub fn denoise_decomposition<T: Real>(
    decomp: &Decomposition<T>,
    pe_config: &PeConfig,
    pe_threshold: f64,
) -> Result<(Vec<T>, DenoiseReport)> {
    let n = decomp.signal_len();
    let mut warnings = Vec::new();
    let part = if decomp.num_imfs() == 0 {
        warnings.push("decomposition has zero IMFs; series passed through".to_string());
        Partition {
            partition: 1,
            pe_values: vec![],
            warnings: vec![],
        }
    } else {
        partition_imfs(decomp, pe_config, pe_threshold)?
    };
    warnings.extend(part.warnings);

    let mut sigmas = Vec::new();
    let mut lambdas = Vec::new();
    let mut denoised = Vec::new();
    for imf in &decomp.imfs[..part.partition - 1] {
        let sigma = robust_sigma(&imf.values).to_f64_lossy();
        let lambda = adaptive_lambda(imf, n)?;
        denoised.push(soft_threshold(&imf.values, T::lit(lambda)));
        sigmas.push(sigma);
        lambdas.push(lambda);
    }
    let values = reconstruct(decomp, part.partition, &denoised)?;
    Ok((
        values,
        DenoiseReport {
            series_len: n,
            num_imfs: decomp.num_imfs(),
            pe_values: part.pe_values,
            pe_threshold,
            partition: part.partition,
            sigmas,
            lambdas,
            warnings,
        },
    ))
}

/// Full adaptive noise reduction: decompose, partition, threshold,
/// reconstruct.
pub fn denoise_series<T: Real>(
    series: &TimeSeries<T>,
    config: &DenoiseConfig,
) -> Result<(TimeSeries<T>, DenoiseReport)> {
    let (denoised, report, _) = denoise_series_with_decomposition(series, config)?;
    Ok((denoised, report))
}

/// As [`denoise_series`], also returning the decomposition it worked on.
pub fn denoise_series_with_decomposition<T: Real>(
    series: &TimeSeries<T>,
    config: &DenoiseConfig,
) -> Result<(TimeSeries<T>, DenoiseReport, Decomposition<T>)> {
    series.validate()?;
    config.validate("denoise")?;
    let decomp = ceemdan_decompose(&series.values, &config.ceemdan).stage("decompose")?;
    let (values, report) =
        denoise_decomposition(&decomp, &config.pe, config.pe_threshold).stage("denoise")?;
    Ok((series.with_values(values), report, decomp))
}
