//! Loading, validating, scaling, splitting and windowing hourly price series.
//!
//! CSV input is comma separated with an optional header row. Accepted column
//! layouts are `price`, `timestamp,price` and `timestamp,price,load`, where
//! the optional third column is an exogenous channel (e.g. electrical load).
//! Rows with missing or non-finite values are rejected; there is no
//! imputation.

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

/// Output format used when timestamps are written back out.
pub const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M";

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc())
}

/// A uniformly sampled series of prices.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    pub values: Vec<T>,
    pub start: Option<NaiveDateTime>,
    /// Sampling interval in seconds.
    pub step_secs: i64,
    /// Optional exogenous channel aligned sample-for-sample with `values`.
    pub exogenous: Option<Vec<T>>,
}

impl<T: Real> TimeSeries<T> {
    /// Hourly series without timestamps.
    pub fn new(values: Vec<T>) -> Self {
        TimeSeries {
            values,
            start: None,
            step_secs: 3600,
            exogenous: None,
        }
    }

    pub fn with_start(mut self, start: NaiveDateTime) -> Self {
        self.start = Some(start);
        self
    }

    pub fn with_exogenous(mut self, exo: Vec<T>) -> Result<Self> {
        if exo.len() != self.values.len() {
            return Err(Error::dim(format!(
                "exogenous channel has {} samples, prices have {}",
                exo.len(),
                self.values.len()
            )));
        }
        self.exogenous = Some(exo);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `i`, if the series is anchored.
    pub fn timestamp(&self, i: usize) -> Option<NaiveDateTime> {
        self.start
            .map(|s| s + Duration::seconds(self.step_secs * i as i64))
    }

    /// Timestamp of sample `i` formatted for output, or the bare index.
    pub fn label(&self, i: usize) -> String {
        match self.timestamp(i) {
            Some(t) => t.format(TIMESTAMP_OUT).to_string(),
            None => i.to_string(),
        }
    }

    /// Copy of the samples `[from, to)` with the anchor shifted accordingly.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        TimeSeries {
            values: self.values[from..to].to_vec(),
            start: self.timestamp(from),
            step_secs: self.step_secs,
            exogenous: self.exogenous.as_ref().map(|e| e[from..to].to_vec()),
        }
    }

    /// Same anchor and sampling, different values.
    pub fn with_values(&self, values: Vec<T>) -> Self {
        TimeSeries {
            values,
            start: self.start,
            step_secs: self.step_secs,
            exogenous: self.exogenous.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if self.step_secs <= 0 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("non-positive sampling step {} s", self.step_secs),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: i as u64 + 1,
                msg: "non-finite value".into(),
            });
        }
        Ok(())
    }
}

/// Reads a price series from a CSV file.
pub fn load_series<T: Real>(path: impl AsRef<Path>) -> Result<TimeSeries<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(file)
}

/// Parses a price series from any CSV source. See the module docs for the
/// accepted layouts.
pub fn read_series<T: Real, R: Read>(reader: R) -> Result<TimeSeries<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut stamps: Vec<NaiveDateTime> = Vec::new();
    let mut exo = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let looks_like_data = rec
                .iter()
                .any(|f| f.parse::<f64>().is_ok() || parse_timestamp(f).is_some());
            if !looks_like_data {
                continue;
            }
        }

        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                line,
                msg: format!("expected {w} columns, found {}", rec.len()),
            });
        }
        let (ts_field, price_field, exo_field) = match w {
            1 => (None, &rec[0], None),
            2 => (Some(&rec[0]), &rec[1], None),
            3 => (Some(&rec[0]), &rec[1], Some(&rec[2])),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 1 to 3 columns, found {w}"),
                })
            }
        };

        if let Some(ts) = ts_field {
            let t = parse_timestamp(ts).ok_or_else(|| Error::Parse {
                line,
                msg: format!("unparseable timestamp {ts:?}"),
            })?;
            stamps.push(t);
        }
        values.push(parse_value::<T>(price_field, line, "price")?);
        if let Some(f) = exo_field {
            exo.push(parse_value::<T>(f, line, "exogenous value")?);
        }
    }

    if values.is_empty() {
        return Err(Error::EmptySeries);
    }

    let mut series = TimeSeries::new(values);
    if let Some(&t0) = stamps.first() {
        series.start = Some(t0);
        if stamps.len() >= 2 {
            let step = (stamps[1] - t0).num_seconds();
            if step <= 0 {
                return Err(Error::Parse {
                    line: 2,
                    msg: "timestamps must be strictly increasing".into(),
                });
            }
            series.step_secs = step;
            for (i, pair) in stamps.windows(2).enumerate() {
                if (pair[1] - pair[0]).num_seconds() != step {
                    return Err(Error::Parse {
                        line: i as u64 + 2,
                        msg: format!(
                            "gap or irregular sampling between {} and {}",
                            pair[0], pair[1]
                        ),
                    });
                }
            }
        }
    }
    if !exo.is_empty() {
        series.exogenous = Some(exo);
    }
    series.validate()?;
    Ok(series)
}

fn parse_value<T: Real>(field: &str, line: u64, what: &str) -> Result<T> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("unparseable {what} {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite {what} {field:?}"),
        });
    }
    Ok(T::lit(v))
}

/// Writes a series in a form [`read_series`] accepts: `timestamp,price`
/// (plus `load` when an exogenous channel is present), or a bare `price`
/// column when the series has no timestamps.
pub fn write_series<T: Real>(series: &TimeSeries<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, series_to_csv(series)).map_err(|e| Error::io(path, e))
}

pub fn series_to_csv<T: Real>(series: &TimeSeries<T>) -> String {
    let mut out = String::new();
    match (series.start.is_some(), &series.exogenous) {
        (false, _) => {
            out.push_str("price\n");
            for v in &series.values {
                out.push_str(&format!("{v}\n"));
            }
        }
        (true, None) => {
            out.push_str("timestamp,price\n");
            for (i, v) in series.values.iter().enumerate() {
                out.push_str(&format!("{},{v}\n", series.label(i)));
            }
        }
        (true, Some(exo)) => {
            out.push_str("timestamp,price,load\n");
            for (i, (v, e)) in series.values.iter().zip(exo).enumerate() {
                out.push_str(&format!("{},{v},{e}\n", series.label(i)));
            }
        }
    }
    out
}

/// Chronological split into a training prefix and the following test block.
pub fn split<T: Real>(
    series: &TimeSeries<T>,
    n_train: usize,
    n_test: usize,
) -> Result<(TimeSeries<T>, TimeSeries<T>)> {
    let len = series.len();
    if n_train.checked_add(n_test).is_none_or(|total| total > len) {
        return Err(Error::SplitOverflow {
            n_train,
            n_test,
            len,
        });
    }
    Ok((
        series.slice(0, n_train),
        series.slice(n_train, n_train + n_test),
    ))
}

/// Min-max scaler onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Scaler<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> Scaler<T> {
    pub fn fit(values: &[T]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        let (min, max) = values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if max <= min {
            return Err(Error::ConstantSeries);
        }
        Ok(Scaler { min, max })
    }

    #[inline]
    pub fn transform(&self, x: T) -> T {
        (x - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn inverse(&self, y: T) -> T {
        y * (self.max - self.min) + self.min
    }

    pub fn transform_all(&self, xs: &[T]) -> Vec<T> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse_all(&self, ys: &[T]) -> Vec<T> {
        ys.iter().map(|&y| self.inverse(y)).collect()
    }
}

/// Fits a scaler on `series` and returns the scaled copy alongside it.
pub fn fit_scale<T: Real>(series: &TimeSeries<T>) -> Result<(TimeSeries<T>, Scaler<T>)> {
    let scaler = Scaler::fit(&series.values)?;
    Ok((series.with_values(scaler.transform_all(&series.values)), scaler))
}

/// Sliding-window pairs for direct multi-step forecasting.
///
/// `inputs[i]` covers samples `[i, i + window)` and `targets[i]` is the
/// sample at `i + window + horizon - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
    pub window: usize,
    pub horizon: usize,
}

impl<T: Real> WindowedDataset<T> {
    /// Windows over `inputs` paired with targets taken from `targets`, which
    /// must be aligned with `inputs` (e.g. denoised inputs, raw targets).
    /// When `exogenous` is given, its window is appended to each input.
    pub fn from_sources(
        inputs: &[T],
        targets: &[T],
        exogenous: Option<&[T]>,
        window: usize,
        horizon: usize,
    ) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(Error::config(
                "window/horizon",
                "window length and horizon must be at least 1",
            ));
        }
        if inputs.len() != targets.len() || exogenous.is_some_and(|e| e.len() != inputs.len()) {
            return Err(Error::dim("input, target and exogenous sources differ in length"));
        }
        let n = inputs.len();
        if n < window + horizon {
            return Err(Error::TooShort {
                needed: window + horizon,
                got: n,
            });
        }
        let count = n - window - horizon + 1;
        let inputs = (0..count)
            .map(|i| {
                let mut w = inputs[i..i + window].to_vec();
                if let Some(e) = exogenous {
                    w.extend_from_slice(&e[i..i + window]);
                }
                w
            })
            .collect();
        let targets = (0..count).map(|i| targets[i + window + horizon - 1]).collect();
        Ok(WindowedDataset {
            inputs,
            targets,
            window,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Index in the source series of the sample predicted by pair `i`.
    pub fn target_index(&self, i: usize) -> usize {
        i + self.window + self.horizon - 1
    }
}

/// Windows a single series onto itself.
pub fn make_windows<T: Real>(
    series: &TimeSeries<T>,
    window: usize,
    horizon: usize,
) -> Result<WindowedDataset<T>> {
    WindowedDataset::from_sources(&series.values, &series.values, None, window, horizon)
}
