//! Empirical mode decomposition by sifting, and its complete-ensemble
//! variant with adaptive noise (CEEMDAN).
//!
//! Envelopes are natural cubic splines through the local extrema, with two
//! extrema mirrored about each end of the signal to tame end swings. Sifting
//! stops once the candidate passes the IMF test (extrema and zero-crossing
//! counts differ by at most one, mean envelope near zero), once the Cauchy
//! SD criterion drops below its threshold, or at the iteration cap.

mod ceemdan;
pub mod spline;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ceemdan::{ceemdan_decompose, CeemdanConfig, NoiseScalePolicy};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, std_dev, Real};
use spline::natural_spline_on_grid;

/// Shortest signal that can be decomposed.
pub const MIN_SIGNAL_LEN: usize = 8;

/// One intrinsic mode function, numbered from 1 (highest frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Imf<T> {
    pub index: usize,
    pub values: Vec<T>,
}

/// IMFs ordered from high to low frequency plus the final residue. The
/// IMFs and residue sum back to the source signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Decomposition<T> {
    pub imfs: Vec<Imf<T>>,
    pub residue: Vec<T>,
}

impl<T: Real> Decomposition<T> {
    pub fn num_imfs(&self) -> usize {
        self.imfs.len()
    }

    pub fn signal_len(&self) -> usize {
        self.residue.len()
    }

    /// Sum of all IMFs and the residue.
    pub fn reconstruct(&self) -> Vec<T> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, &v) in out.iter_mut().zip(&imf.values) {
                *o += v;
            }
        }
        out
    }

    /// Columnar text dump: one column per IMF, residue last.
    pub fn to_columns(&self) -> String {
        let mut out = String::new();
        for imf in &self.imfs {
            let _ = write!(out, "imf{},", imf.index);
        }
        out.push_str("residue\n");
        for i in 0..self.signal_len() {
            for imf in &self.imfs {
                let _ = write!(out, "{},", imf.values[i]);
            }
            let _ = writeln!(out, "{}", self.residue[i]);
        }
        out
    }

    pub fn write_columns(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_columns()).map_err(|e| Error::io(path, e))
    }
}

/// Stopping rules for the sifting loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftSettings {
    /// Cauchy criterion: stop when `sum((h_prev - h)^2) / sum(h_prev^2)`
    /// falls below this.
    pub sd_threshold: f64,
    pub max_iterations: usize,
    /// IMF test: mean envelope must stay below this fraction of the input
    /// standard deviation.
    pub mean_tolerance: f64,
}

impl Default for SiftSettings {
    fn default() -> Self {
        SiftSettings {
            sd_threshold: 0.2,
            max_iterations: 50,
            mean_tolerance: 0.05,
        }
    }
}

impl SiftSettings {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.sd_threshold.is_nan() || self.sd_threshold <= 0.0 {
            return Err(Error::config(format!("{prefix}.sd_threshold"), "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config(format!("{prefix}.max_iterations"), "must be >= 1"));
        }
        if self.mean_tolerance.is_nan() || self.mean_tolerance <= 0.0 {
            return Err(Error::config(format!("{prefix}.mean_tolerance"), "must be > 0"));
        }
        Ok(())
    }
}

/// Default cap on the number of IMFs for a signal of length `n`:
/// `floor(log2 n) - 1`, at least 1.
pub fn default_max_imfs(n: usize) -> usize {
    let log2 = usize::BITS - 1 - n.max(1).leading_zeros();
    (log2 as usize).saturating_sub(1).max(1)
}

/// Local maxima and minima positions. A flat plateau counts once, at its
/// midpoint; endpoints are never extrema.
pub fn extrema<T: Real>(x: &[T]) -> (Vec<usize>, Vec<usize>) {
    let n = x.len();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] == x[i - 1] {
            i += 1;
            continue;
        }
        let rising = x[i] > x[i - 1];
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 < n {
            if rising && x[j + 1] < x[i] {
                maxima.push((i + j) / 2);
            } else if !rising && x[j + 1] > x[i] {
                minima.push((i + j) / 2);
            }
        }
        i = j + 1;
    }
    (maxima, minima)
}

/// Number of sign changes, treating zero as positive.
pub fn zero_crossings<T: Real>(x: &[T]) -> usize {
    x.windows(2)
        .filter(|w| (w[0] < T::zero()) != (w[1] < T::zero()))
        .count()
}

/// True when `x` has at least two maxima and two minima.
pub fn is_siftable<T: Real>(x: &[T]) -> bool {
    let (maxima, minima) = extrema(x);
    maxima.len() >= 2 && minima.len() >= 2
}

/// Spline envelope through the extrema at `idx`, with the two outermost
/// extrema mirrored about each end. The end sample itself becomes a knot
/// when it lies outside the envelope.
fn envelope<T: Real>(x: &[T], idx: &[usize], upper: bool, out: &mut [T]) {
    let n = x.len();
    let last = n - 1;
    let outside = |v: T, e: T| if upper { v > e } else { v < e };

    let mut xs = Vec::with_capacity(idx.len() + 6);
    let mut ys = Vec::with_capacity(idx.len() + 6);
    let (e0, e1) = (idx[0], idx[1]);
    xs.push(-T::of_usize(e1));
    ys.push(x[e1]);
    xs.push(-T::of_usize(e0));
    ys.push(x[e0]);
    if outside(x[0], x[e0]) {
        xs.push(T::zero());
        ys.push(x[0]);
    }
    for &i in idx {
        xs.push(T::of_usize(i));
        ys.push(x[i]);
    }
    let (l1, l0) = (idx[idx.len() - 2], idx[idx.len() - 1]);
    if outside(x[last], x[l0]) {
        xs.push(T::of_usize(last));
        ys.push(x[last]);
    }
    xs.push(T::of_usize(2 * last - l0));
    ys.push(x[l0]);
    xs.push(T::of_usize(2 * last - l1));
    ys.push(x[l1]);

    natural_spline_on_grid(&xs, &ys, out);
}

/// Mean of the upper and lower envelopes, or `None` when `x` is not siftable.
pub fn mean_envelope<T: Real>(x: &[T]) -> Option<(Vec<T>, usize)> {
    let (maxima, minima) = extrema(x);
    if maxima.len() < 2 || minima.len() < 2 {
        return None;
    }
    let n = x.len();
    let mut upper = vec![T::zero(); n];
    let mut lower = vec![T::zero(); n];
    envelope(x, &maxima, true, &mut upper);
    envelope(x, &minima, false, &mut lower);
    let half = T::lit(0.5);
    let mean = upper
        .iter()
        .zip(&lower)
        .map(|(&u, &l)| (u + l) * half)
        .collect();
    Some((mean, maxima.len() + minima.len()))
}

/// Extracts the first (highest-frequency) IMF of `signal`.
///
/// Returns `(imf, remainder)` with `imf + remainder == signal` up to one
/// rounding per sample. Fails with [`Error::MonotoneComponent`] when the
/// signal has fewer than two maxima or two minima; callers then treat the
/// whole signal as residue.
pub fn sift_imf<T: Real>(signal: &[T], settings: &SiftSettings) -> Result<(Vec<T>, Vec<T>)> {
    if !is_siftable(signal) {
        return Err(Error::MonotoneComponent);
    }
    let tol = T::lit(settings.mean_tolerance) * std_dev(signal);
    let sd_threshold = T::lit(settings.sd_threshold);
    let mut h = signal.to_vec();

    for _ in 0..settings.max_iterations {
        let Some((mean, n_extrema)) = mean_envelope(&h) else {
            break;
        };
        let crossings = zero_crossings(&h);
        if n_extrema.abs_diff(crossings) <= 1 && max_abs(&mean) < tol {
            break;
        }
        let mut num = T::zero();
        let mut den = T::zero();
        for (hv, &m) in h.iter_mut().zip(&mean) {
            den += *hv * *hv;
            num += m * m;
            *hv -= m;
        }
        if den == T::zero() || num / den < sd_threshold {
            break;
        }
    }

    let remainder: Vec<T> = signal.iter().zip(&h).map(|(&s, &v)| s - v).collect();
    Ok((h, remainder))
}

/// Plain EMD: peels IMFs off successive remainders until the remainder is
/// monotone or `max_imfs` is reached.
pub fn emd_decompose<T: Real>(
    signal: &[T],
    max_imfs: usize,
    settings: &SiftSettings,
) -> Result<Decomposition<T>> {
    if signal.len() < MIN_SIGNAL_LEN {
        return Err(Error::TooShort {
            needed: MIN_SIGNAL_LEN,
            got: signal.len(),
        });
    }
    let mut residue = signal.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < max_imfs {
        match sift_imf(&residue, settings) {
            Ok((imf, rest)) => {
                imfs.push(Imf {
                    index: imfs.len() + 1,
                    values: imf,
                });
                residue = rest;
            }
            Err(Error::MonotoneComponent) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(Decomposition { imfs, residue })
}
