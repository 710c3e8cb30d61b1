use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wits_core::bench::{
    self, estimate_rejection_rate, run_on_data, sweep, DatasetSpec, ExperimentConfig, FalkonSettings, KernelSpec,
    LambdaSpec, Method, ResultRow,
};
use wits_core::data::{load_csv, CsvOptions, TwoSample};
use wits_core::hypotest::ThresholdMode;
use wits_core::modelsel::ParamGrid;
use wits_core::witness::SplitRatio;
use wits_core::{ErrorKind, WitsError};
use wits_cli::config::{self, ConfigError, RunConfig, DEFAULT_CG_ITERATIONS, DEFAULT_LAMBDA};
use wits_cli::report::{TestReport, REPORT_COLUMNS};

/// Witness two-sample tests and power experiments.
#[derive(Parser)]
#[command(name = "wits", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one test on two CSV files.
    Test(Box<TestArgs>),
    /// Estimate a rejection rate from a config file.
    Power(RunArgs),
    /// Estimate rejection rates along the config's [sweep] axis.
    Sweep(RunArgs),
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with the X sample, one point per row.
    x: PathBuf,
    /// CSV file with the Y sample.
    y: PathBuf,
    #[arg(long, default_value = "kfda-witness")]
    method: String,
    #[arg(long, default_value_t = bench::DEFAULT_ALPHA)]
    alpha: f64,
    /// Number of permutations.
    #[arg(long = "B", default_value_t = wits_core::hypotest::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Fraction of the data used to learn the witness.
    #[arg(long = "r", default_value_t = wits_core::witness::DEFAULT_SPLIT_RATIO)]
    split_ratio: f64,
    /// Gaussian bandwidth, `median`, or `linear` for the linear kernel.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `default` (cross-validate over the standard grids), `none`, or a TOML
    /// file with `sigma_grid` and `lambda_grid`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "falkon-centers")]
    falkon_centers: Option<usize>,
    #[arg(long = "cg-iters")]
    cg_iters: Option<usize>,
    /// `permutation` or `analytic`.
    #[arg(long, default_value = "permutation")]
    threshold: String,
    /// Report (count + 1) / (B + 1) instead of count / B.
    #[arg(long)]
    plus_one: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// 0-based columns to read, e.g. `0,2`.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<usize>>,
    #[arg(long, default_value = ",")]
    delimiter: char,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    /// Write the one-row CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Results CSV; the resolved config goes next to it with a
    /// `.resolved.toml` extension.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Core(WitsError),
}

impl From<WitsError> for Failure {
    fn from(e: WitsError) -> Self {
        Failure::Core(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Worker count from `WITS_THREADS`, capped by the configured value if any.
fn thread_cap(configured: usize) -> Result<usize, Failure> {
    match std::env::var("WITS_THREADS") {
        Err(_) => Ok(configured),
        Ok(s) => {
            let cap: usize = s
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| usage(format!("WITS_THREADS must be a positive integer, got `{s}`")))?;
            Ok(if configured == 0 { cap } else { configured.min(cap) })
        }
    }
}

fn kernel_from_flag(s: &str) -> Result<KernelSpec, Failure> {
    match s {
        "median" => Ok(KernelSpec::MedianHeuristic),
        "linear" => Ok(KernelSpec::Grid(vec![wits_core::Kernel::Linear])),
        _ => match s.parse::<f64>() {
            Ok(b) if b > 0.0 && b.is_finite() => Ok(KernelSpec::Gaussian(b)),
            _ => Err(usage(format!("--sigma must be a positive number, `median` or `linear`, got `{s}`"))),
        },
    }
}

fn test_config(args: &TestArgs) -> Result<ExperimentConfig, Failure> {
    let method: Method = args.method.parse()?;
    let dataset = DatasetSpec::Csv {
        x_path: args.x.clone(),
        y_path: args.y.clone(),
        options: CsvOptions {
            columns: args.columns.clone(),
            delimiter: csv_delimiter(args.delimiter)?,
        },
        n: None,
        m: None,
    };
    let mut cfg = ExperimentConfig::new(dataset, method);

    let grid = match args.grid.as_deref() {
        None if method.splits() => Some(ParamGrid::default_grid()),
        None | Some("none") => None,
        Some(_) if !method.splits() => {
            return Err(usage(format!("--grid does not apply to {method}; set --sigma and --lambda")))
        }
        Some("default") => Some(ParamGrid::default_grid()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| WitsError::Io {
                path: PathBuf::from(path),
                source,
            })?;
            Some(config::parse_grid_file(&text).map_err(|e| usage(format!("{path}: {e}")))?)
        }
    };
    cfg.kernel = match (&args.sigma, &grid) {
        (Some(s), _) => kernel_from_flag(s)?,
        (None, Some(g)) => KernelSpec::Grid(g.kernels().to_vec()),
        (None, None) => KernelSpec::MedianHeuristic,
    };
    cfg.lambda = match (args.lambda, &grid) {
        (Some(l), _) => LambdaSpec::Fixed(l),
        (None, Some(g)) => LambdaSpec::Grid(g.lambdas().to_vec()),
        (None, None) => LambdaSpec::Fixed(DEFAULT_LAMBDA),
    };
    cfg.split_ratio = SplitRatio::new(args.split_ratio)?;
    cfg.alpha = args.alpha;
    cfg.permutations = args.permutations;
    cfg.plus_one = args.plus_one;
    cfg.folds = args.folds;
    cfg.seed = args.seed;
    cfg.threshold = match args.threshold.as_str() {
        "permutation" => ThresholdMode::Permutation,
        "analytic" => ThresholdMode::Analytic,
        other => return Err(usage(format!("--threshold must be `permutation` or `analytic`, got `{other}`"))),
    };
    cfg.falkon = match (args.falkon_centers, args.cg_iters) {
        (None, None) => None,
        (None, Some(_)) => return Err(usage("--cg-iters needs --falkon-centers")),
        (Some(centers), iters) => Some(FalkonSettings {
            centers,
            iterations: iters.unwrap_or(DEFAULT_CG_ITERATIONS),
        }),
    };
    if cfg.falkon.is_some() && method != Method::KfdaWitness {
        return Err(usage("--falkon-centers applies only to kfda-witness"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csv_delimiter(c: char) -> Result<u8, Failure> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| usage(format!("--delimiter must be an ASCII character, got `{c}`")))
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> WitsError + '_ {
    move |source| WitsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_record_csv(out: &mut dyn Write, header: &[&str], row: &[String]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    w.write_record(row)?;
    w.flush()
}

fn cmd_test(args: &TestArgs) -> Result<(), Failure> {
    let cfg = test_config(args)?;
    let DatasetSpec::Csv { options, .. } = &cfg.dataset else {
        unreachable!("test always reads CSV files")
    };
    let x = load_csv(&args.x, options)?;
    let y = load_csv(&args.y, options)?;
    let ts = TwoSample::new(x, y, cfg.dataset.name())?;
    let threads = thread_cap(0)?;
    let result = wits_core::parallel::with_threads(threads, || run_on_data(&ts, &cfg))?;
    let (xs, ys) = (args.x.display().to_string(), args.y.display().to_string());
    let report = TestReport {
        x: &xs,
        y: &ys,
        n: ts.x.len(),
        m: ts.y.len(),
        config: &cfg,
        result: &result,
    };
    println!("{}", report.human());
    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(io_error(path))?;
            write_record_csv(&mut file, &REPORT_COLUMNS, &report.record()).map_err(io_error(path))?;
            println!("report     {}", path.display());
        }
        None => {
            println!();
            let stdout = std::io::stdout();
            write_record_csv(&mut stdout.lock(), &REPORT_COLUMNS, &report.record())
                .map_err(io_error(Path::new("<stdout>")))?;
        }
    }
    Ok(())
}

fn load_run_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    config::parse_config(&text, base).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs, require_sweep: bool) -> Result<(), Failure> {
    let mut run = load_run_config(&args.config)?;
    if require_sweep && run.sweep.is_none() {
        return Err(usage(format!("{}: `wits sweep` needs a [sweep] section", args.config.display())));
    }
    let resolved_path = args.out.with_extension("resolved.toml");
    std::fs::write(&resolved_path, config::resolved_toml(&run)).map_err(io_error(&resolved_path))?;

    run.experiment.threads = thread_cap(run.experiment.threads)?;
    let rows = match &run.sweep {
        Some(axis) => sweep(&run.experiment, axis)?,
        None => {
            let estimate = estimate_rejection_rate(&run.experiment)?;
            vec![ResultRow::new(&run.experiment, estimate)]
        }
    };
    bench::write_results(&args.out, &rows)?;
    for row in &rows {
        println!(
            "{:<16} n={:<5} m={:<5} r={:<5} sigma={:<8} lambda={:<8} rate={:.4} ± {:.4}",
            row.method.id(),
            row.n,
            row.m,
            row.r.map_or("-".into(), |r| r.to_string()),
            row.sigma,
            if row.lambda.is_empty() { "-" } else { &row.lambda },
            row.estimate.rejection_rate,
            row.estimate.std_err,
        );
    }
    println!("results    {}", args.out.display());
    println!("config     {}", resolved_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Power(args) => cmd_run(args, false),
        Command::Sweep(args) => cmd_run(args, true),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
