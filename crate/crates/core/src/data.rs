//! Datasets: the synthetic softmax-linear Gaussian-mixture generator, CSV
//! ingestion, splitting, and a reference optimum computed with the true
//! class-probability function.
//!
//! Labels are 0-based in memory and 1-based in CSV files.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::confusion::{ClassProbability, CostSensitiveClassifier};
use crate::error::{Error, Result};
use crate::measures::{MeasureKind, MeasureSpec};
use crate::ncbs;
use crate::ncfw;
use crate::noise::NoiseModel;
use crate::numerics::{csv_error, Matrix};

/// Default Monte Carlo size for [`bayes_oracle`].
pub const ORACLE_EVAL_POINTS: usize = 1_000_000;

/// Features (m×d) with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

/// Which CSV column holds the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptySample);
        }
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::DegenerateLabels {
                label: bad as i64 + 1,
                n: n_classes,
            });
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    /// Class count inferred from the largest label.
    pub fn with_inferred_classes(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let n = labels.iter().max().map(|&y| y + 1).ok_or(Error::EmptySample)?;
        Dataset::new(features, labels, n)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same features with replacement labels.
    pub fn relabel(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.n_classes)
    }

    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Dataset> {
        if n_classes < self.n_classes {
            return Dataset::new(self.features, self.labels, n_classes);
        }
        self.n_classes = n_classes;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptySample);
        }
        let d = self.dim();
        let mut feats = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            feats.extend_from_slice(self.features.row(i));
        }
        Dataset::new(
            Matrix::new(indices.len(), d, feats)?,
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.n_classes,
        )
    }

    /// Shuffled split with `round(ratio·m)` rows in the first part.
    pub fn split_train_test<R: Rng + ?Sized>(&self, ratio: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
        }
        let m = self.len();
        let n_train = (ratio * m as f64).round() as usize;
        if n_train == 0 || n_train >= m {
            return Err(Error::EmptySample);
        }
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(rng);
        Ok((self.subset(&idx[..n_train])?, self.subset(&idx[n_train..])?))
    }

    /// First `⌈m/2⌉` rows and the rest, without shuffling.
    pub fn split_halves(&self) -> Result<(Dataset, Dataset)> {
        let m = self.len();
        if m < 2 {
            return Err(Error::EmptySample);
        }
        let first = m.div_ceil(2);
        let idx: Vec<usize> = (0..m).collect();
        Ok((self.subset(&idx[..first])?, self.subset(&idx[first..])?))
    }

    pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 0,
                column: "-".into(),
                message: "missing header row".into(),
            });
        }
        let label_idx = match label_column {
            LabelColumn::Name(name) => headers.iter().position(|h| h == name),
            LabelColumn::Index(i) => (*i < headers.len()).then_some(*i),
        }
        .ok_or_else(|| Error::MissingLabelColumn {
            path: path.to_path_buf(),
            column: match label_column {
                LabelColumn::Name(n) => n.clone(),
                LabelColumn::Index(i) => format!("#{i}"),
            },
        })?;

        let d = headers.len() - 1;
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let row = r + 2; // 1-based, after the header
            let record = record.map_err(|e| csv_error(path, e))?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: "-".into(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let parse_err = |message: String| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: headers[c].to_string(),
                    message,
                };
                if c == label_idx {
                    let label: i64 = cell
                        .parse()
                        .map_err(|_| parse_err(format!("label `{cell}` is not an integer")))?;
                    if label < 1 {
                        return Err(Error::DegenerateLabels { label, n: 0 });
                    }
                    labels.push(label as usize - 1);
                } else {
                    let v: f64 = cell.parse().map_err(|_| parse_err(format!("`{cell}` is not a number")))?;
                    if !v.is_finite() {
                        return Err(parse_err(format!("`{cell}` is not finite")));
                    }
                    feats.push(v);
                }
            }
        }
        if labels.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: "-".into(),
                message: "no data rows".into(),
            });
        }
        if d == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: "-".into(),
                message: "no feature columns".into(),
            });
        }
        Dataset::with_inferred_classes(Matrix::new(labels.len(), d, feats)?, labels)
    }

    /// Writes `x1..xd,label` with 1-based labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for (i, &y) in self.labels.iter().enumerate() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push((y + 1).to_string());
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One Gaussian component with diagonal covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Gaussian-mixture instances with a softmax-linear class-probability
/// function `η_y(x) ∝ exp(w_yᵀx + b_y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub components: Vec<GaussianComponent>,
    /// One row `w_y` per class.
    pub eta_weights: Vec<Vec<f64>>,
    pub eta_biases: Vec<f64>,
}

impl Default for SyntheticSpec {
    /// Three classes in the plane. Instances come from an equal-weight
    /// mixture of unit-variance Gaussians at (0,0), (3,0) and (0,3); class 1
    /// dominates the centre blob and classes 2 and 3 are minority classes
    /// pointing towards the outer blobs.
    fn default() -> Self {
        let blob = |mean: [f64; 2]| GaussianComponent {
            weight: 1.0 / 3.0,
            mean: mean.to_vec(),
            variance: vec![1.0, 1.0],
        };
        SyntheticSpec {
            n_classes: 3,
            dim: 2,
            components: vec![blob([0.0, 0.0]), blob([3.0, 0.0]), blob([0.0, 3.0])],
            eta_weights: vec![vec![0.0, 0.0], vec![1.5, -0.5], vec![-0.5, 1.5]],
            eta_biases: vec![1.5, -3.0, -3.5],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.n_classes < 2 || self.dim == 0 {
            return bad("need n_classes >= 2 and dim >= 1".into());
        }
        if self.components.is_empty() {
            return bad("mixture has no components".into());
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if self.components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights must be non-negative and sum to 1 (sum {total})"));
        }
        for (k, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim || c.variance.len() != self.dim {
                return bad(format!("component {k} has wrong dimension"));
            }
            if c.variance.iter().any(|v| !(*v > 0.0)) {
                return bad(format!("component {k} has non-positive variance"));
            }
        }
        if self.eta_weights.len() != self.n_classes || self.eta_weights.iter().any(|w| w.len() != self.dim) {
            return bad("eta_weights must be n_classes rows of length dim".into());
        }
        if self.eta_biases.len() != self.n_classes {
            return bad("eta_biases must have n_classes entries".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Exact class probabilities at `x`.
    pub fn true_eta(&self, x: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> = self
            .eta_weights
            .iter()
            .zip(&self.eta_biases)
            .map(|(w, b)| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        softmax(&scores)
    }

    /// Draws `m` instances from the mixture and a clean label for each
    /// from `η(x)`.
    pub fn generate<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let picker = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .map_err(|e| Error::Config(format!("synthetic spec: {e}")))?;
        let sds: Vec<Vec<f64>> = self.components.iter().map(|c| c.variance.iter().map(|v| v.sqrt()).collect()).collect();
        let mut feats = Vec::with_capacity(m * self.dim);
        let mut labels = Vec::with_capacity(m);
        let mut x = vec![0.0; self.dim];
        for _ in 0..m {
            let k = picker.sample(rng);
            let comp = &self.components[k];
            for j in 0..self.dim {
                let z: f64 = StandardNormal.sample(rng);
                x[j] = comp.mean[j] + sds[k][j] * z;
            }
            let eta = self.true_eta(&x);
            labels.push(sample_categorical(&eta, rng));
            feats.extend_from_slice(&x);
        }
        Dataset::new(Matrix::new(m, self.dim, feats)?, labels, self.n_classes)
    }
}

impl ClassProbability for SyntheticSpec {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!("expected {} features, got {}", self.dim, x.len())));
        }
        Ok(self.true_eta(x))
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

/// Reference optimum of `measure` on a synthetic distribution.
///
/// Runs Frank-Wolfe (monotonic convex) or bisection (ratio-of-linear) with
/// the exact `η` standing in for a learned estimator and `eval_points`
/// clean Monte Carlo draws standing in for the distribution, and returns the
/// measure value the solver reaches.
pub fn bayes_oracle<R: Rng + ?Sized>(spec: &SyntheticSpec, measure: &MeasureSpec, eval_points: usize, rng: &mut R) -> Result<f64> {
    let sample = spec.generate(eval_points, rng)?;
    let eta: Arc<dyn ClassProbability> = Arc::new(spec.clone());
    let probs = eta.predict_proba_rows(sample.features())?;
    let noise = NoiseModel::identity(spec.n_classes);
    match measure.kind() {
        MeasureKind::MonotonicConvex(_) => {
            let run = ncfw::frank_wolfe(measure, &noise, &probs, sample.labels(), ncfw::DEFAULT_STEPS)?;
            Ok(run.trace.final_value())
        }
        MeasureKind::RatioOfLinear { a, b } => {
            let run = ncbs::bisection(a, b, &noise, &probs, sample.labels(), ncbs::DEFAULT_STEPS)?;
            let clf = CostSensitiveClassifier::new(eta, run.final_loss)?;
            measure.evaluate(&crate::confusion::confusion_from_probs(&probs, sample.labels(), clf.loss())?)
        }
    }
}
