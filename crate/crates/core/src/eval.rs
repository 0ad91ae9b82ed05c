//! Error metrics and the multi-horizon comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::CellKind;
use crate::scalar::Real;

/// Published errors on the Iranian market test set at horizons 3/6/9/12 h,
/// for side-by-side comparison only.
pub const REFERENCE_HORIZONS: [usize; 4] = [3, 6, 9, 12];
pub const REFERENCE_GRU_RMSE: [f64; 4] = [2.86, 3.89, 5.18, 6.48];
pub const REFERENCE_GRU_MAE: [f64; 4] = [1.8, 2.83, 3.92, 5.0];
pub const REFERENCE_LSTM_RMSE: [f64; 4] = [4.33, 5.28, 6.39, 7.5];
pub const REFERENCE_LSTM_MAE: [f64; 4] = [2.09, 2.94, 4.0, 5.42];

fn check_pair<T>(actual: &[T], predicted: &[T]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::dim(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse<T: Real>(actual: &[T], predicted: &[T]) -> Result<T> {
    check_pair(actual, predicted)?;
    let sse: T = actual
        .iter()
        .zip(predicted)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok((sse / T::of_usize(actual.len())).sqrt())
}

/// Mean absolute error.
pub fn mae<T: Real>(actual: &[T], predicted: &[T]) -> Result<T> {
    check_pair(actual, predicted)?;
    let sae: T = actual.iter().zip(predicted).map(|(&a, &p)| (a - p).abs()).sum();
    Ok(sae / T::of_usize(actual.len()))
}

/// Display name of the full pipeline built around `kind`.
pub fn model_label(kind: CellKind) -> String {
    format!("ANR-SAE-{}", kind.label())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub horizon: usize,
    pub rmse: f64,
    pub mae: f64,
    pub n_samples: usize,
}

impl MetricReport {
    pub fn compute<T: Real>(model: impl Into<String>, horizon: usize, actual: &[T], predicted: &[T]) -> Result<Self> {
        let report = MetricReport {
            model: model.into(),
            horizon,
            rmse: rmse(actual, predicted)?.to_f64_lossy(),
            mae: mae(actual, predicted)?.to_f64_lossy(),
            n_samples: actual.len(),
        };
        // The power-mean inequality guarantees rmse >= mae up to rounding.
        debug_assert!(report.rmse >= report.mae * (1.0 - 1e-12));
        Ok(report)
    }

    /// `rmse >= mae`, allowing for the last bits of rounding.
    pub fn is_consistent(&self) -> bool {
        self.n_samples >= 1 && self.mae >= 0.0 && self.rmse >= self.mae * (1.0 - 1e-12)
    }
}

/// One (model, horizon) entry; failures keep their message.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub kind: CellKind,
    pub horizon: usize,
    pub outcome: std::result::Result<MetricReport, String>,
}

/// Benchmark result: one row per (model, metric), one column per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub kinds: Vec<CellKind>,
    pub horizons: Vec<usize>,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    Mae,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Mae => "MAE",
        }
    }

    fn of(self, r: &MetricReport) -> f64 {
        match self {
            Metric::Rmse => r.rmse,
            Metric::Mae => r.mae,
        }
    }
}

pub const FAILURE_MARKER: &str = "FAILED";

impl ResultTable {
    pub fn get(&self, kind: CellKind, horizon: usize) -> Option<&MetricReport> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.horizon == horizon)
            .and_then(|c| c.outcome.as_ref().ok())
    }

    pub fn value(&self, kind: CellKind, metric: Metric, horizon: usize) -> Option<f64> {
        self.get(kind, horizon).map(|r| metric.of(r))
    }

    /// Number of metric cells (models x horizons x 2).
    pub fn metric_cell_count(&self) -> usize {
        self.kinds.len() * self.horizons.len() * 2
    }

    pub fn failures(&self) -> impl Iterator<Item = &TableCell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }

    fn cell_text(&self, kind: CellKind, metric: Metric, horizon: usize) -> String {
        match self.value(kind, metric, horizon) {
            Some(v) => format!("{v:.6}"),
            None => FAILURE_MARKER.to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,metric");
        for h in &self.horizons {
            let _ = write!(out, ",h{h}");
        }
        out.push('\n');
        for &kind in &self.kinds {
            for metric in [Metric::Rmse, Metric::Mae] {
                let _ = write!(out, "{},{}", model_label(kind), metric.label());
                for &h in &self.horizons {
                    let _ = write!(out, ",{}", self.cell_text(kind, metric, h));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Aligned plain-text rendering with RMSE and MAE side by side.
    pub fn to_text(&self) -> String {
        let label_w = self
            .kinds
            .iter()
            .map(|&k| model_label(k).len())
            .max()
            .unwrap_or(5)
            .max(5);
        let col_w = 12;
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "Model");
        for metric in [Metric::Rmse, Metric::Mae] {
            for h in &self.horizons {
                let _ = write!(out, " {:>col_w$}", format!("{} h={h}", metric.label()));
            }
        }
        out.push('\n');
        for &kind in &self.kinds {
            let _ = write!(out, "{:<label_w$}", model_label(kind));
            for metric in [Metric::Rmse, Metric::Mae] {
                for &h in &self.horizons {
                    let text = match self.value(kind, metric, h) {
                        Some(v) => format!("{v:.4}"),
                        None => FAILURE_MARKER.to_string(),
                    };
                    let _ = write!(out, " {text:>col_w$}");
                }
            }
            out.push('\n');
        }
        for cell in self.failures() {
            if let Err(msg) = &cell.outcome {
                let _ = writeln!(out, "# {} h={}: {msg}", model_label(cell.kind), cell.horizon);
            }
        }
        out
    }
}
