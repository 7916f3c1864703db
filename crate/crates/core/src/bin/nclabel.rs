use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nclabel::data::LabelColumn;
use nclabel::harness::{self, Algo, DataSource, NoiseSource, RunConfig, SweepConfig, DEFAULT_TEST_SIZE};
use nclabel::{Error, MeasureName, NoiseScheme, TrainConfig};

#[derive(Parser)]
#[command(name = "nclabel", version, about = "Learn confusion-matrix measures from noisy labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test CSVs with noisy training labels.
    Synth(SynthArgs),
    /// Train one algorithm and print its result as a JSON line.
    Run(RunArgs),
    /// Run a σ × m × seed grid, appending JSON lines to --out.
    Sweep(SweepArgs),
    /// Summarize a results file as mean and standard error per group.
    Report(ReportArgs),
}

#[derive(Args)]
struct NoiseArgs {
    /// Noise level of the generated channel.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// uniform or random-column.
    #[arg(long, default_value = "uniform", value_parser = parse::<NoiseScheme>)]
    noise_scheme: NoiseScheme,
    /// Channel matrix as headerless CSV; T[i][j] = P(noisy i | clean j).
    #[arg(long, conflicts_with = "sigma")]
    noise_matrix: Option<PathBuf>,
}

impl NoiseArgs {
    fn source(&self) -> NoiseSource {
        match &self.noise_matrix {
            Some(p) => NoiseSource::Matrix(p.clone()),
            None => NoiseSource::Scheme { scheme: self.noise_scheme, sigma: self.sigma },
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().l2_lambda)]
    l2_lambda: f64,
    /// Choose λ by k-fold cross-validation instead of --l2-lambda.
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().grad_tolerance)]
    grad_tol: f64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    lr: f64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            l2_lambda: self.l2_lambda,
            max_iters: self.max_iters,
            grad_tolerance: self.grad_tol,
            learning_rate: self.lr,
            cv_folds: self.cv_folds,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Synthetic distribution as TOML; the built-in default otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// ncfw, fw, ncbs, bs, plugin, nclr-backward or nclr-forward.
    #[arg(long, value_parser = parse::<Algo>)]
    algo: Algo,
    /// hmean, qmean, gmean or microf1.
    #[arg(long, value_parser = parse::<MeasureName>)]
    measure: MeasureName,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Estimated channel used by the algorithm instead of the true one.
    #[arg(long)]
    noise_matrix_estimate: Option<PathBuf>,
    /// Ignore the channel when training (labels are still noisy).
    #[arg(long)]
    identity_noise: bool,
    /// Solver iterations; 5000 for Frank-Wolfe, 200 for bisection.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic training sample size.
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    /// Synthetic clean test sample size.
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Synthetic distribution as TOML; the built-in default otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Training CSV with clean labels (passed through the channel).
    #[arg(long, conflicts_with = "spec")]
    train: Option<PathBuf>,
    /// Test CSV with clean labels; without it --train is split 7:3.
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Label column name, or a 0-based index.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// The --train labels are already noisy.
    #[arg(long, requires = "train")]
    noisy_train: bool,
    #[command(flatten)]
    train_args: TrainArgs,
    /// Append the JSON line to this file instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse::<Algo>)]
    algo: Vec<Algo>,
    #[arg(long, value_parser = parse::<MeasureName>)]
    measure: MeasureName,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', required = true)]
    sigma: Vec<f64>,
    #[arg(long, default_value = "uniform", value_parser = parse::<NoiseScheme>)]
    noise_scheme: NoiseScheme,
    /// Comma-separated training sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seed: Vec<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Synthetic distribution as TOML; the built-in default otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    train_args: TrainArgs,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Results file (JSON lines); existing records are kept and skipped.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Results file written by `run --out` or `sweep`.
    results: PathBuf,
    /// CSV destination; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn label_column(s: &str) -> LabelColumn {
    match s.parse::<usize>() {
        Ok(i) => LabelColumn::Index(i),
        Err(_) => LabelColumn::Name(s.to_string()),
    }
}

fn synth(args: SynthArgs) -> nclabel::Result<()> {
    let cfg = RunConfig {
        algo: Algo::Plugin,
        measure: MeasureName::QMean,
        noise: args.noise.source(),
        noise_estimate: None,
        identity_noise: false,
        steps: None,
        seed: args.seed,
        data: DataSource::Synthetic { spec: args.spec, m: args.m, test_size: args.test_size },
        train: TrainConfig::default(),
    };
    let out = harness::synthesize(&cfg, &args.out)?;
    for p in [&out.train, &out.train_clean, &out.test, &out.noise_matrix] {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(args: RunArgs) -> nclabel::Result<()> {
    let data = match args.train {
        Some(train) => DataSource::Csv {
            train,
            test: args.test,
            label_column: label_column(&args.label_column),
            noisy_train: args.noisy_train,
        },
        None => DataSource::Synthetic { spec: args.spec, m: args.m, test_size: args.test_size },
    };
    let cfg = RunConfig {
        algo: args.algo,
        measure: args.measure,
        noise: args.noise.source(),
        noise_estimate: args.noise_matrix_estimate,
        identity_noise: args.identity_noise,
        steps: args.steps,
        seed: args.seed,
        data,
        train: args.train_args.config(),
    };
    let line = harness::run_experiment(&cfg)?.to_json_line();
    match args.out {
        Some(path) => {
            let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io_error(&path, e))?;
            writeln!(f, "{line}").map_err(|e| io_error(&path, e))
        }
        None => {
            println!("{line}");
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs) -> nclabel::Result<()> {
    let base = RunConfig {
        algo: args.algo[0],
        measure: args.measure,
        noise: NoiseSource::Scheme { scheme: args.noise_scheme, sigma: args.sigma[0] },
        noise_estimate: None,
        identity_noise: false,
        steps: args.steps,
        seed: args.seed[0],
        data: DataSource::Synthetic { spec: args.spec, m: args.m[0], test_size: args.test_size },
        train: args.train_args.config(),
    };
    let cfg = SweepConfig {
        base,
        algos: args.algo,
        sigmas: args.sigma,
        ms: args.m,
        seeds: args.seed,
        jobs: args.jobs,
    };
    let summary = harness::run_sweep(&cfg, &args.out)?;
    eprintln!(
        "{} cells: {} already recorded, {} completed, {} failed",
        summary.total, summary.skipped, summary.completed, summary.failed
    );
    Ok(())
}

fn report(args: ReportArgs) -> nclabel::Result<()> {
    let rows = harness::summarize(&harness::read_results(&args.results)?)?;
    match args.out {
        Some(path) => {
            let f = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
            harness::write_summary(&rows, f)
        }
        None => harness::write_summary(&rows, std::io::stdout().lock()),
    }
}

fn io_error(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
