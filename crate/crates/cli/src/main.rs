use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use epf_core::config::PipelineConfig;
use epf_core::denoise::denoise_series;
use epf_core::emd::ceemdan_decompose;
use epf_core::error::StageExt;
use epf_core::neural::ForecastModel;
use epf_core::pipeline::{fit_model, model_file_name, prepare, run_benchmark, train_sae};
use epf_core::synthetic::{generate, SyntheticConfig};
use epf_core::timeseries::{load_series, series_to_csv, write_series};
use epf_core::{Error, ErrorClass, Result, TimeSeries64};

#[derive(Parser)]
#[command(name = "epf", version, about = "Electricity price forecasting pipeline")]
struct Cli {
    /// Log progress (-v) or details (-vv) to stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose the data series and write its IMFs (imfs.csv).
    Decompose(RunArgs),
    /// Denoise the data series (denoised.csv, denoise_report.json).
    Denoise(RunArgs),
    /// Train one model per cell kind and horizon and save them.
    Train(RunArgs),
    /// Forecast with a saved model over every position of a series.
    Predict(PredictArgs),
    /// Full train/test comparison (table.csv, table.txt, trace.csv).
    Benchmark(RunArgs),
    /// Write the seeded synthetic price series.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Data file, overriding `data.path`.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Saved model file.
    #[arg(short, long)]
    model: PathBuf,
    /// Use the input prices as they are instead of denoising them first.
    #[arg(long)]
    raw: bool,
    /// Forecast CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    len: usize,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(input) = &self.input {
            cfg.data.path = input.clone();
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg.resolved())
    }
}

fn load_data(cfg: &PipelineConfig) -> Result<TimeSeries64> {
    load_series(&cfg.data.path).stage("load")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn decompose(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let series = load_data(&cfg)?;
    let dir = cfg.prepare_output_dir()?;
    let decomp = ceemdan_decompose(&series.values, &cfg.denoise.ceemdan).stage("decompose")?;
    let path = dir.join("imfs.csv");
    decomp.write_columns(&path)?;
    println!("{} IMFs plus residue written to {}", decomp.num_imfs(), path.display());
    Ok(())
}

fn denoise(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let series = load_data(&cfg)?;
    let dir = cfg.prepare_output_dir()?;
    let (clean, report) = denoise_series(&series, &cfg.denoise)?;
    write_series(&clean, dir.join("denoised.csv"))?;
    report.write(dir.join("denoise_report.json"))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    println!(
        "{} IMFs, first clean IMF {}; outputs in {}",
        report.num_imfs,
        report.partition,
        dir.display()
    );
    Ok(())
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let series = load_data(&cfg)?;
    let dir = cfg.prepare_output_dir()?;
    let data = prepare(&series, &cfg)?;
    let sae = train_sae(&data, &cfg)?;
    for &kind in &cfg.model.cells {
        for &h in &cfg.model.horizons {
            let model = fit_model(&data, &sae, kind, h, &cfg)?;
            let path = dir.join(model_file_name(kind, h));
            model.save(&path)?;
            println!("{kind} h={h}: {}", path.display());
        }
    }
    Ok(())
}

fn predict(args: &PredictArgs) -> Result<()> {
    let cfg = args.run.config()?;
    let model = ForecastModel::<f64>::load(&args.model).stage("load model")?;
    let path = args.run.input.as_ref().unwrap_or(&cfg.data.path);
    let series: TimeSeries64 = load_series(path).stage("load")?;
    let hist = model.required_history();
    if series.len() < hist {
        return Err(Error::TooShort {
            needed: hist,
            got: series.len(),
        })
        .stage("predict");
    }
    let inputs = if args.raw {
        series.values.clone()
    } else {
        denoise_series(&series, &cfg.denoise)?.0.values
    };
    let exo = match (&model.exog_scaler, &series.exogenous) {
        (Some(_), Some(e)) => Some(e.as_slice()),
        (Some(_), None) => {
            return Err(Error::dim("model expects a load column in the input")).stage("predict")
        }
        (None, _) => None,
    };
    let mut out = String::from("timestamp,forecast\n");
    for j in 0..=series.len() - hist {
        let y = model
            .forecast(&inputs[j..j + hist], exo.map(|e| &e[j..j + hist]))
            .stage("predict")?;
        let target = j + hist + model.horizon - 1;
        out.push_str(&format!("{},{y:.6}\n", series.label(target)));
    }
    match &args.out {
        Some(p) => write_file(p, &out),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn benchmark(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let series = load_data(&cfg)?;
    let dir = cfg.prepare_output_dir()?;
    let out = run_benchmark(&series, &cfg)?;
    out.write(&dir)?;
    print!("{}", out.table.to_text());
    info!("results written to {}", dir.display());
    let inconsistent = out
        .table
        .cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok())
        .any(|r| !r.is_consistent());
    if inconsistent {
        return Err(Error::dim("a metric report has rmse < mae")).stage("evaluate");
    }
    Ok(out.table.failures().count() == 0)
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let defaults = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        len: args.len,
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let series = generate(&cfg);
    write_file(&args.out, &series_to_csv(&series))
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Denoise(a) => denoise(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Benchmark(a) => match benchmark(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: some benchmark cells failed; see table.txt");
                return ExitCode::from(exit_code(ErrorClass::Numeric));
            }
            Err(e) => Err(e),
        },
        Command::Generate(a) => run_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
