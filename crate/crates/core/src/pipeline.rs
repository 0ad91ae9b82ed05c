//! End-to-end runs: split, denoise, feature extraction, training and
//! evaluation over every configured (cell kind, horizon) pair.

use std::fmt::Write as _;
use std::path::Path;

use log::info;
use ndarray::Array1;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::denoise::{denoise_series, DenoiseReport};
use crate::error::{Error, Result, StageExt};
use crate::eval::{model_label, MetricReport, ResultTable, TableCell};
use crate::neural::{
    build_sae, train_forecaster, CellKind, CodeSequences, ForecastModel, SaeStack,
    MODEL_FORMAT_VERSION,
};
use crate::scalar::Real;
use crate::timeseries::{split, Scaler, TimeSeries};

/// Train and test blocks, raw and denoised, with the scalers fitted on the
/// raw training prices.
#[derive(Debug, Clone)]
pub struct PreparedData<T> {
    pub train: TimeSeries<T>,
    pub test: TimeSeries<T>,
    pub train_denoised: Vec<T>,
    pub test_denoised: Vec<T>,
    pub train_report: DenoiseReport,
    pub test_report: DenoiseReport,
    pub scaler: Scaler<T>,
    pub exog_scaler: Option<Scaler<T>>,
}

/// Scaled model inputs and targets for one block.
struct ScaledBlock<T> {
    inputs: Vec<T>,
    targets: Vec<T>,
    exogenous: Option<Vec<T>>,
}

impl<T: Real> PreparedData<T> {
    fn scaled(&self, raw: &TimeSeries<T>, denoised: &[T]) -> ScaledBlock<T> {
        ScaledBlock {
            inputs: self.scaler.transform_all(denoised),
            targets: self.scaler.transform_all(&raw.values),
            exogenous: match (&self.exog_scaler, &raw.exogenous) {
                (Some(sc), Some(e)) => Some(sc.transform_all(e)),
                _ => None,
            },
        }
    }

    fn train_block(&self) -> ScaledBlock<T> {
        self.scaled(&self.train, &self.train_denoised)
    }

    fn test_block(&self) -> ScaledBlock<T> {
        self.scaled(&self.test, &self.test_denoised)
    }
}

/// Splits `series` and denoises the training and test blocks separately.
pub fn prepare<T: Real>(series: &TimeSeries<T>, cfg: &PipelineConfig) -> Result<PreparedData<T>> {
    let cfg = cfg.resolved();
    series.validate()?;
    let need = cfg.model.window + cfg.model.seq_len - 1 + cfg.model.horizons.iter().max().copied().unwrap_or(1);
    for (n, field) in [(cfg.data.n_train, "train"), (cfg.data.n_test, "test")] {
        if n < need {
            return Err(Error::TooShort { needed: need, got: n }).stage(if field == "train" {
                "split-train"
            } else {
                "split-test"
            });
        }
    }
    if cfg.data.use_exogenous && series.exogenous.is_none() {
        return Err(Error::config(
            "data.use_exogenous",
            "the data file has no exogenous (third) column",
        ));
    }
    let (mut train, mut test) = split(series, cfg.data.n_train, cfg.data.n_test)?;
    if !cfg.data.use_exogenous {
        train.exogenous = None;
        test.exogenous = None;
    }
    info!("denoising {} training samples", train.len());
    let (train_dn, train_report) = denoise_series(&train, &cfg.denoise).stage("denoise-train")?;
    info!("denoising {} test samples", test.len());
    let (test_dn, test_report) = denoise_series(&test, &cfg.denoise).stage("denoise-test")?;
    let scaler = Scaler::fit(&train.values)?;
    let exog_scaler = match &train.exogenous {
        Some(e) => Some(Scaler::fit(e)?),
        None => None,
    };
    Ok(PreparedData {
        train,
        test,
        train_denoised: train_dn.values,
        test_denoised: test_dn.values,
        train_report,
        test_report,
        scaler,
        exog_scaler,
    })
}

/// Every length-`window` input vector of a block, in order.
fn input_windows<T: Real>(inputs: &[T], exogenous: Option<&[T]>, window: usize) -> Vec<Array1<T>> {
    (0..=inputs.len() - window)
        .map(|i| {
            let mut w = inputs[i..i + window].to_vec();
            if let Some(e) = exogenous {
                w.extend_from_slice(&e[i..i + window]);
            }
            Array1::from(w)
        })
        .collect()
}

/// Pretrains the stacked autoencoder on the denoised training windows.
pub fn train_sae<T: Real>(data: &PreparedData<T>, cfg: &PipelineConfig) -> Result<SaeStack<T>> {
    let cfg = cfg.resolved();
    let block = data.train_block();
    let windows = input_windows(&block.inputs, block.exogenous.as_deref(), cfg.model.window);
    info!("pretraining autoencoder on {} windows", windows.len());
    build_sae(&windows, &cfg.sae.dims, &cfg.sae.train).stage("autoencoder")
}

/// Codes of every training window under `sae`.
fn training_codes<T: Real>(data: &PreparedData<T>, sae: &SaeStack<T>, window: usize) -> Vec<Array1<T>> {
    let block = data.train_block();
    input_windows(&block.inputs, block.exogenous.as_deref(), window)
        .iter()
        .map(|w| sae.encode(w.view()))
        .collect()
}

fn fit_with_codes<T: Real>(
    data: &PreparedData<T>,
    sae: &SaeStack<T>,
    codes: &[Array1<T>],
    kind: CellKind,
    horizon: usize,
    cfg: &PipelineConfig,
) -> Result<ForecastModel<T>> {
    let window = cfg.model.window;
    let targets = data.train_block().targets;
    let count = targets.len() + 1 - window - horizon;
    let sample_targets = (0..count).map(|i| targets[i + window + horizon - 1]).collect();
    let seqs = CodeSequences::new(codes[..count].to_vec(), sample_targets, cfg.model.seq_len)?;
    let train_cfg = cfg.model_train_config(kind, horizon);
    let trained = train_forecaster(&seqs, kind, cfg.model.hidden_dim, &train_cfg)?;
    info!(
        "{} h={horizon}: best epoch {} of {}",
        model_label(kind),
        trained.best_epoch + 1,
        trained.train_losses.len()
    );
    Ok(ForecastModel {
        format_version: MODEL_FORMAT_VERSION,
        window,
        horizon,
        seq_len: cfg.model.seq_len,
        sae_dims: sae.dims.clone(),
        encoders: sae.encoders.clone(),
        net: trained.net,
        scaler: data.scaler,
        exog_scaler: data.exog_scaler,
        config_hash: cfg.hash(),
        train_losses: trained.train_losses,
        val_losses: trained.val_losses,
    })
}

/// Trains the predictor for one (cell kind, horizon) pair.
pub fn fit_model<T: Real>(
    data: &PreparedData<T>,
    sae: &SaeStack<T>,
    kind: CellKind,
    horizon: usize,
    cfg: &PipelineConfig,
) -> Result<ForecastModel<T>> {
    let codes = training_codes(data, sae, cfg.model.window);
    fit_with_codes(data, sae, &codes, kind, horizon, cfg).stage("train")
}

/// Out-of-sample forecasts over the test block, in price units.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub kind: CellKind,
    pub horizon: usize,
    /// Position in the test block of each forecast target.
    pub target_index: Vec<usize>,
    pub actual: Vec<T>,
    pub predicted: Vec<T>,
    pub report: MetricReport,
}

/// Forecasts every test target that has a full history inside the test
/// block, scoring against the raw test prices.
pub fn evaluate<T: Real>(model: &ForecastModel<T>, data: &PreparedData<T>) -> Result<Evaluation<T>> {
    let block = data.test_block();
    let hist = model.required_history();
    let n = block.inputs.len();
    if n < hist + model.horizon {
        return Err(Error::TooShort {
            needed: hist + model.horizon,
            got: n,
        })
        .stage("evaluate");
    }
    let count = n - hist - model.horizon + 1;
    let mut target_index = Vec::with_capacity(count);
    let mut actual = Vec::with_capacity(count);
    let mut predicted = Vec::with_capacity(count);
    for j in 0..count {
        let exo = block.exogenous.as_ref().map(|e| &e[j..j + hist]);
        let y = model
            .forecast_scaled(&block.inputs[j..j + hist], exo)
            .stage("evaluate")?;
        let t = j + hist + model.horizon - 1;
        target_index.push(t);
        actual.push(data.test.values[t]);
        predicted.push(data.scaler.inverse(y));
    }
    let kind = model.cell_kind();
    let report = MetricReport::compute(model_label(kind), model.horizon, &actual, &predicted)?;
    if !report.rmse.is_finite() {
        return Err(Error::Divergence {
            epoch: model.train_losses.len(),
            loss: report.rmse,
        })
        .stage("evaluate");
    }
    Ok(Evaluation {
        kind,
        horizon: model.horizon,
        target_index,
        actual,
        predicted,
        report,
    })
}

/// Outcome of one (cell kind, horizon) job.
#[derive(Debug, Clone)]
pub struct JobResult<T> {
    pub kind: CellKind,
    pub horizon: usize,
    pub outcome: Result<(ForecastModel<T>, Evaluation<T>), String>,
}

/// Everything a benchmark run produces.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput<T> {
    pub table: ResultTable,
    pub jobs: Vec<JobResult<T>>,
    pub data: PreparedData<T>,
    pub trace_horizon: usize,
    pub trace_len: usize,
}

/// Trains and evaluates every configured model. Jobs run in parallel;
/// results are collected in configuration order, and a failed job leaves
/// a failure marker in its cells instead of aborting the run.
pub fn run_benchmark<T: Real>(series: &TimeSeries<T>, cfg: &PipelineConfig) -> Result<BenchmarkOutput<T>> {
    cfg.validate()?;
    let data = prepare(series, cfg)?;
    let sae = train_sae(&data, cfg)?;
    let codes = training_codes(&data, &sae, cfg.model.window);
    let pairs: Vec<(CellKind, usize)> = cfg
        .model
        .cells
        .iter()
        .flat_map(|&k| cfg.model.horizons.iter().map(move |&h| (k, h)))
        .collect();
    let jobs: Vec<JobResult<T>> = pairs
        .par_iter()
        .map(|&(kind, horizon)| {
            let outcome = fit_with_codes(&data, &sae, &codes, kind, horizon, cfg)
                .stage("train")
                .and_then(|m| evaluate(&m, &data).map(|e| (m, e)))
                .map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                log::error!("{} h={horizon} failed: {msg}", model_label(kind));
            }
            JobResult {
                kind,
                horizon,
                outcome,
            }
        })
        .collect();
    let table = ResultTable {
        kinds: cfg.model.cells.clone(),
        horizons: cfg.model.horizons.clone(),
        cells: jobs
            .iter()
            .map(|j| TableCell {
                kind: j.kind,
                horizon: j.horizon,
                outcome: j
                    .outcome
                    .as_ref()
                    .map(|(_, e)| e.report.clone())
                    .map_err(Clone::clone),
            })
            .collect(),
    };
    Ok(BenchmarkOutput {
        table,
        jobs,
        data,
        trace_horizon: cfg.output.trace_horizon,
        trace_len: cfg.output.trace_len,
    })
}

pub const TRACE_HEADER: &str = "timestamp,actual,predicted_gru,predicted_lstm";

impl<T: Real> BenchmarkOutput<T> {
    fn evaluation(&self, kind: CellKind, horizon: usize) -> Option<&Evaluation<T>> {
        self.jobs
            .iter()
            .find(|j| j.kind == kind && j.horizon == horizon)
            .and_then(|j| j.outcome.as_ref().ok())
            .map(|(_, e)| e)
    }

    /// Actual and predicted prices over the first `trace_len` test targets
    /// at the trace horizon. Missing or failed models read `NA`.
    pub fn trace_csv(&self) -> String {
        let h = self.trace_horizon;
        let gru = self.evaluation(CellKind::Gru, h);
        let lstm = self.evaluation(CellKind::Lstm, h);
        let mut out = format!("{TRACE_HEADER}\n");
        let Some(base) = gru.or(lstm) else {
            return out;
        };
        let cell = |e: Option<&Evaluation<T>>, i: usize| {
            e.map(|e| format!("{:.6}", e.predicted[i].to_f64_lossy()))
                .unwrap_or_else(|| "NA".into())
        };
        for i in 0..base.target_index.len().min(self.trace_len) {
            let t = base.target_index[i];
            let _ = writeln!(
                out,
                "{},{:.6},{},{}",
                self.data.test.label(t),
                base.actual[i].to_f64_lossy(),
                cell(gru, i),
                cell(lstm, i)
            );
        }
        out
    }

    /// Writes `table.csv`, `table.txt`, `trace.csv` and the two denoising
    /// reports into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put("table.csv", self.table.to_csv())?;
        put("table.txt", self.table.to_text())?;
        put("trace.csv", self.trace_csv())?;
        put("denoise_train.json", self.data.train_report.to_json() + "\n")?;
        put("denoise_test.json", self.data.test_report.to_json() + "\n")?;
        Ok(())
    }
}

/// File name under which the CLI stores a trained model.
pub fn model_file_name(kind: CellKind, horizon: usize) -> String {
    format!("model_{}_h{horizon}.json", kind.label().to_ascii_lowercase())
}
