//! Experiment runner: single runs, σ × m sweeps and summary reports.
//!
//! Every run draws its randomness from independent ChaCha streams of one
//! seed (training data, test data, noise matrix, train-label flips,
//! test-label flips, training), so runs that differ only in the algorithm
//! or in m share the same test set.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::confusion::RandomizedClassifier;
use crate::cpe::TrainConfig;
use crate::data::{Dataset, LabelColumn, SyntheticSpec};
use crate::error::{Error, Result};
use crate::measures::{MeasureName, MeasureSpec};
use crate::ncbs;
use crate::ncfw;
use crate::noise::{NoiseModel, NoiseScheme};
use crate::numerics::Matrix;

pub const DEFAULT_TEST_SIZE: usize = 20_000;
pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    Ncfw,
    Fw,
    Ncbs,
    Bs,
    Plugin,
    NclrBackward,
    NclrForward,
}

impl Algo {
    pub const ALL: [Algo; 7] = [
        Algo::Ncfw,
        Algo::Fw,
        Algo::Ncbs,
        Algo::Bs,
        Algo::Plugin,
        Algo::NclrBackward,
        Algo::NclrForward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Ncfw => "ncfw",
            Algo::Fw => "fw",
            Algo::Ncbs => "ncbs",
            Algo::Bs => "bs",
            Algo::Plugin => "plugin",
            Algo::NclrBackward => "nclr-backward",
            Algo::NclrForward => "nclr-forward",
        }
    }

    pub fn default_steps(self) -> Option<usize> {
        match self {
            Algo::Ncfw | Algo::Fw => Some(ncfw::DEFAULT_STEPS),
            Algo::Ncbs | Algo::Bs => Some(ncbs::DEFAULT_STEPS),
            _ => None,
        }
    }

    /// The uncorrected variants ignore the noise model.
    fn uses_identity_noise(self) -> bool {
        matches!(self, Algo::Fw | Algo::Bs)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}' (expected one of ncfw, fw, ncbs, bs, plugin, nclr-backward, nclr-forward)")))
    }
}

/// Where the true noise channel comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSource {
    Scheme { scheme: NoiseScheme, sigma: f64 },
    Matrix(PathBuf),
}

impl NoiseSource {
    fn sigma(&self) -> Option<f64> {
        match self {
            NoiseSource::Scheme { sigma, .. } => Some(*sigma),
            NoiseSource::Matrix(_) => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            NoiseSource::Scheme { scheme, .. } => scheme.as_str().to_string(),
            NoiseSource::Matrix(p) => p.display().to_string(),
        }
    }

    fn resolve(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<NoiseModel> {
        match self {
            NoiseSource::Scheme { scheme, sigma } => NoiseModel::from_scheme(*scheme, n, *sigma, rng),
            NoiseSource::Matrix(path) => NoiseModel::build(Matrix::read_csv(path)?),
        }
    }
}

/// Training and test data for a run.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// `m` training and `test_size` test points from a synthetic spec
    /// (the built-in default when `spec` is `None`).
    Synthetic { spec: Option<PathBuf>, m: usize, test_size: usize },
    /// CSV files; without a test file the training file is split 7:3.
    Csv {
        train: PathBuf,
        test: Option<PathBuf>,
        label_column: LabelColumn,
        /// Training labels are already noisy; do not pass them through the
        /// channel again.
        noisy_train: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub measure: MeasureName,
    pub noise: NoiseSource,
    /// Estimated channel used by the algorithm in place of the true one.
    pub noise_estimate: Option<PathBuf>,
    /// Run the algorithm with `T = I` regardless of the channel.
    pub identity_noise: bool,
    pub steps: Option<usize>,
    pub seed: u64,
    pub data: DataSource,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        self.steps.or(self.algo.default_steps()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let monotonic = !matches!(self.measure, MeasureName::MicroF1);
        match self.algo {
            Algo::Ncfw | Algo::Fw if !monotonic => {
                return Err(Error::UnsupportedMeasure(
                    self.measure.to_string(),
                    format!("{} needs hmean, qmean or gmean", self.algo),
                ))
            }
            Algo::Ncbs | Algo::Bs if monotonic => {
                return Err(Error::UnsupportedMeasure(self.measure.to_string(), format!("{} needs microf1", self.algo)))
            }
            _ => {}
        }
        if self.algo.default_steps().is_some() && self.steps() == 0 {
            return Err(Error::Config("--steps must be at least 1".into()));
        }
        if let DataSource::Synthetic { m, test_size, .. } = &self.data {
            if *m < 2 {
                return Err(Error::Config("--m must be at least 2".into()));
            }
            if *test_size < 1 {
                return Err(Error::Config("--test-size must be at least 1".into()));
            }
        }
        self.train.validate()
    }

    fn m(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic { m, .. } => Some(*m),
            DataSource::Csv { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algo: String,
    pub measure: String,
    pub sigma: Option<f64>,
    pub noise: String,
    pub m: usize,
    pub steps: usize,
    pub seed: u64,
    pub clean_test_loss: f64,
    pub noisy_test_loss: f64,
    #[serde(rename = "one_norm_of_T_inv")]
    pub one_norm_of_t_inv: f64,
    pub wall_ms: u64,
    /// `‖T̂⁻¹ - T⁻¹‖₁` when an estimated channel was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_gap: Option<f64>,
}

impl RunResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run results always serialize")
    }

    /// Everything except `wall_ms`.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        RunResult { wall_ms: 0, ..self.clone() } == RunResult { wall_ms: 0, ..other.clone() }
    }
}

const STREAM_DATA: u64 = 0;
const STREAM_NOISE_MATRIX: u64 = 1;
const STREAM_TRAIN_FLIPS: u64 = 2;
const STREAM_TEST_FLIPS: u64 = 3;
const STREAM_TRAINING: u64 = 4;
const STREAM_TEST_DATA: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Prepared {
    clean_train: Dataset,
    noisy_train: Dataset,
    clean_test: Dataset,
    noisy_test_labels: Vec<usize>,
    truth: NoiseModel,
    n: usize,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let mut data_rng = stream(cfg.seed, STREAM_DATA);
    let (train, test, labels_noisy, spec_n) = match &cfg.data {
        DataSource::Synthetic { spec, m, test_size } => {
            let spec = match spec {
                Some(path) => SyntheticSpec::load(path)?,
                None => SyntheticSpec::default(),
            };
            let train = spec.generate(*m, &mut data_rng)?;
            let test = spec.generate(*test_size, &mut stream(cfg.seed, STREAM_TEST_DATA))?;
            (train, test, false, spec.n_classes)
        }
        DataSource::Csv { train, test, label_column, noisy_train } => {
            let full = Dataset::load_csv(train, label_column)?;
            let (train, test) = match test {
                Some(path) => (full, Dataset::load_csv(path, label_column)?),
                None => full.split_train_test(TRAIN_FRACTION, &mut data_rng)?,
            };
            (train, test, *noisy_train, 0)
        }
    };
    if train.dim() != test.dim() {
        return Err(Error::ShapeMismatch(format!(
            "training data has {} features, test data {}",
            train.dim(),
            test.dim()
        )));
    }
    let mut n = spec_n.max(train.n_classes()).max(test.n_classes());
    if let NoiseSource::Matrix(path) = &cfg.noise {
        let t = Matrix::read_csv(path)?;
        if t.rows() < n {
            return Err(Error::ShapeMismatch(format!(
                "noise matrix {} is {}x{} but the data has {n} classes",
                path.display(),
                t.rows(),
                t.cols()
            )));
        }
        n = t.rows();
    }
    let truth = cfg.noise.resolve(n, &mut stream(cfg.seed, STREAM_NOISE_MATRIX))?;
    let train = train.with_n_classes(n)?;
    let test = test.with_n_classes(n)?;
    let noisy_train = if labels_noisy {
        train.clone()
    } else {
        train.relabel(truth.flip_labels(train.labels(), &mut stream(cfg.seed, STREAM_TRAIN_FLIPS)))?
    };
    let noisy_test_labels = truth.flip_labels(test.labels(), &mut stream(cfg.seed, STREAM_TEST_FLIPS));
    Ok(Prepared {
        clean_train: train,
        noisy_train,
        clean_test: test,
        noisy_test_labels,
        truth,
        n,
    })
}

/// Trains the configured algorithm and evaluates it on the clean and the
/// noisy test labels.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let data = prepare(cfg)?;
    let n = data.n;

    let estimate = match &cfg.noise_estimate {
        Some(path) => Some(NoiseModel::build(Matrix::read_csv(path)?)?),
        None => None,
    };
    if let Some(est) = &estimate {
        if est.n() != n {
            return Err(Error::ShapeMismatch(format!("estimated noise matrix has {} classes, expected {n}", est.n())));
        }
    }
    let inverse_gap = estimate.as_ref().map(|est| data.truth.inverse_gap(est)).transpose()?;
    let working = if cfg.identity_noise || cfg.algo.uses_identity_noise() {
        NoiseModel::identity(n)
    } else {
        estimate.unwrap_or_else(|| data.truth.clone())
    };

    let measure = MeasureSpec::from_name(cfg.measure, n)?;
    let steps = cfg.steps();
    let mut rng = stream(cfg.seed, STREAM_TRAINING);
    let sample = &data.noisy_train;
    let h: RandomizedClassifier = match cfg.algo {
        Algo::Ncfw | Algo::Fw => ncfw::run_ncfw(&measure, sample, &working, steps, &cfg.train, &mut rng)?.0,
        Algo::Ncbs | Algo::Bs => {
            let (a, b) = measure.linear_parts().expect("validated ratio measure");
            RandomizedClassifier::deterministic(ncbs::run_ncbs(a, b, sample, &working, steps, &cfg.train, &mut rng)?.0)
        }
        Algo::Plugin => RandomizedClassifier::deterministic(baselines::train_plugin(sample, &working, &cfg.train, &mut rng)?),
        Algo::NclrBackward => RandomizedClassifier::deterministic(baselines::train_backward_lr(sample, &working, &cfg.train, &mut rng)?),
        Algo::NclrForward => RandomizedClassifier::deterministic(baselines::train_forward_lr(sample, &working, &cfg.train, &mut rng)?),
    };

    let confusions = h.expected_confusions(data.clean_test.features(), &[data.clean_test.labels(), &data.noisy_test_labels])?;
    let clean_test_loss = measure.evaluate(&confusions[0])?;
    let noisy_test_loss = measure.evaluate(&confusions[1])?;

    Ok(RunResult {
        algo: cfg.algo.as_str().to_string(),
        measure: cfg.measure.as_str().to_string(),
        sigma: cfg.noise.sigma(),
        noise: cfg.noise.describe(),
        m: sample.len(),
        steps,
        seed: cfg.seed,
        clean_test_loss,
        noisy_test_loss,
        one_norm_of_t_inv: data.truth.one_norm_of_inv(),
        wall_ms: start.elapsed().as_millis() as u64,
        inverse_gap,
    })
}

/// Files written by [`synthesize`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub train: PathBuf,
    pub train_clean: PathBuf,
    pub test: PathBuf,
    pub noise_matrix: PathBuf,
}

/// Writes `train.csv` (noisy labels), `train_clean.csv`, `test.csv` (clean
/// labels) and `noise.csv` (the channel) into `out_dir`, using the same
/// random streams as [`run_experiment`].
pub fn synthesize(cfg: &RunConfig, out_dir: &Path) -> Result<SynthOutput> {
    match cfg.data {
        DataSource::Synthetic { m, test_size, .. } if m < 1 || test_size < 1 => {
            return Err(Error::Config("--m and --test-size must be positive".into()))
        }
        DataSource::Synthetic { .. } => {}
        DataSource::Csv { .. } => return Err(Error::Config("synth only generates synthetic data".into())),
    }
    let data = prepare(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out = SynthOutput {
        train: out_dir.join("train.csv"),
        train_clean: out_dir.join("train_clean.csv"),
        test: out_dir.join("test.csv"),
        noise_matrix: out_dir.join("noise.csv"),
    };
    data.noisy_train.write_csv(&out.train)?;
    data.clean_train.write_csv(&out.train_clean)?;
    data.clean_test.write_csv(&out.test)?;
    data.truth.t().write_csv(&out.noise_matrix)?;
    Ok(out)
}

/// Grid of runs: the cross product of algorithms, noise levels, sample
/// sizes and seeds around a base configuration.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub algos: Vec<Algo>,
    pub sigmas: Vec<f64>,
    pub ms: Vec<usize>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

/// Identity of a record within a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CellKey {
    algo: String,
    measure: String,
    sigma_bits: Option<u64>,
    noise: String,
    m: usize,
    steps: usize,
    seed: u64,
}

impl CellKey {
    fn of(r: &RunResult) -> Self {
        CellKey {
            algo: r.algo.clone(),
            measure: r.measure.clone(),
            sigma_bits: r.sigma.map(f64::to_bits),
            noise: r.noise.clone(),
            m: r.m,
            steps: r.steps,
            seed: r.seed,
        }
    }

    fn of_config(cfg: &RunConfig) -> Option<Self> {
        Some(CellKey {
            algo: cfg.algo.as_str().to_string(),
            measure: cfg.measure.as_str().to_string(),
            sigma_bits: cfg.noise.sigma().map(f64::to_bits),
            noise: cfg.noise.describe(),
            m: cfg.m()?,
            steps: cfg.steps(),
            seed: cfg.seed,
        })
    }
}

impl SweepConfig {
    pub fn cells(&self) -> Result<Vec<RunConfig>> {
        let scheme = match &self.base.noise {
            NoiseSource::Scheme { scheme, .. } => *scheme,
            NoiseSource::Matrix(_) => return Err(Error::Config("sweeps vary σ and need a noise scheme, not a matrix file".into())),
        };
        let test_size = match &self.base.data {
            DataSource::Synthetic { test_size, .. } => *test_size,
            DataSource::Csv { .. } => return Err(Error::Config("sweeps vary m and need synthetic data".into())),
        };
        let spec = match &self.base.data {
            DataSource::Synthetic { spec, .. } => spec.clone(),
            DataSource::Csv { .. } => None,
        };
        let mut cells = Vec::new();
        for &algo in &self.algos {
            for &sigma in &self.sigmas {
                for &m in &self.ms {
                    for &seed in &self.seeds {
                        let cfg = RunConfig {
                            algo,
                            noise: NoiseSource::Scheme { scheme, sigma },
                            seed,
                            data: DataSource::Synthetic { spec: spec.clone(), m, test_size },
                            ..self.base.clone()
                        };
                        cfg.validate()?;
                        cells.push(cfg);
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
}

/// Runs every grid cell not already recorded in `out`, appending one JSON
/// line per finished run in grid order.
pub fn run_sweep(cfg: &SweepConfig, out: &Path) -> Result<SweepSummary> {
    let cells = cfg.cells()?;
    let done: HashSet<CellKey> = if out.exists() {
        read_results(out)?.iter().map(CellKey::of).collect()
    } else {
        HashSet::new()
    };
    let pending: Vec<(usize, &RunConfig)> = cells
        .iter()
        .filter(|c| CellKey::of_config(c).map_or(true, |k| !done.contains(&k)))
        .enumerate()
        .collect();
    let mut summary = SweepSummary {
        total: cells.len(),
        skipped: cells.len() - pending.len(),
        ..SweepSummary::default()
    };
    if pending.is_empty() {
        return Ok(summary);
    }

    let mut file = OpenOptions::new().create(true).append(true).open(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<(usize, Result<RunResult>)>();

    let mut first_error = None;
    std::thread::scope(|scope| {
        scope.spawn(move || {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, (i, c)| {
                    let _ = tx.send((*i, run_experiment(c)));
                });
            });
        });
        // single appender; holds early finishers until their turn
        let mut next = 0;
        let mut parked: BTreeMap<usize, Result<RunResult>> = BTreeMap::new();
        for (i, res) in rx {
            parked.insert(i, res);
            while let Some(res) = parked.remove(&next) {
                next += 1;
                match res {
                    Ok(r) => {
                        if let Err(e) = writeln!(file, "{}", r.to_json_line()).and_then(|_| file.flush()) {
                            first_error.get_or_insert(Error::io(out, e));
                            summary.failed += 1;
                        } else {
                            summary.completed += 1;
                        }
                    }
                    Err(e) => {
                        eprintln!("sweep cell failed: {e}");
                        summary.failed += 1;
                        first_error.get_or_insert(e);
                    }
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Reads a JSON-lines results file; blank lines are ignored.
pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub measure: String,
    pub algo: String,
    pub sigma: Option<f64>,
    pub m: usize,
    pub runs: usize,
    pub clean_test_loss_mean: f64,
    pub clean_test_loss_sem: f64,
    pub noisy_test_loss_mean: f64,
    pub noisy_test_loss_sem: f64,
}

/// Mean and standard error (sample standard deviation over √k) per
/// (measure, algo, σ, m), sorted by that key.
pub fn summarize(records: &[RunResult]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut groups: Vec<((String, String, Option<f64>, usize), Vec<&RunResult>)> = Vec::new();
    for r in records {
        let key = (r.measure.clone(), r.algo.clone(), r.sigma, r.m);
        match groups.iter_mut().find(|(k, _)| k.0 == key.0 && k.1 == key.1 && k.2.map(f64::to_bits) == key.2.map(f64::to_bits) && k.3 == key.3) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups.sort_by(|(a, _), (b, _)| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| match (a.2, b.2) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (x, y) => x.is_some().cmp(&y.is_some()),
            })
            .then_with(|| a.3.cmp(&b.3))
    });
    Ok(groups
        .into_iter()
        .map(|((measure, algo, sigma, m), rs)| {
            let (cm, cs) = mean_sem(rs.iter().map(|r| r.clean_test_loss));
            let (nm, ns) = mean_sem(rs.iter().map(|r| r.noisy_test_loss));
            SummaryRow {
                measure,
                algo,
                sigma,
                m,
                runs: rs.len(),
                clean_test_loss_mean: cm,
                clean_test_loss_sem: cs,
                noisy_test_loss_mean: nm,
                noisy_test_loss_sem: ns,
            }
        })
        .collect())
}

/// Mean and standard error of the mean; 0 error for a single value.
pub fn mean_sem(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(format!("cannot write report: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}
