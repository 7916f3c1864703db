//! Deterministic cost-sensitive classifiers, randomized mixtures of them,
//! and empirical confusion matrices.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::measures::ConfusionMatrix;
use crate::numerics::Matrix;

/// Mixture components lighter than this are dropped.
pub const MIN_COMPONENT_WEIGHT: f64 = 1e-12;

/// Anything that maps a feature vector to a distribution over `n` classes.
pub trait ClassProbability: Send + Sync {
    fn n_classes(&self) -> usize;

    fn dim(&self) -> usize;

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Probabilities for every row of `features`, as an m×n matrix.
    fn predict_proba_rows(&self, features: &Matrix) -> Result<Matrix> {
        let n = self.n_classes();
        let mut out = Vec::with_capacity(features.rows() * n);
        for i in 0..features.rows() {
            out.extend(self.predict_proba(features.row(i))?);
        }
        Matrix::new(features.rows(), n, out)
    }
}

/// `x ↦ argmin_y η̂(x)ᵀ·ℓ_y`, where `ℓ_y` is column `y` of the loss matrix.
#[derive(Clone)]
pub struct CostSensitiveClassifier {
    cpe: Arc<dyn ClassProbability>,
    loss: Matrix,
}

impl fmt::Debug for CostSensitiveClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSensitiveClassifier").field("loss", &self.loss).finish_non_exhaustive()
    }
}

impl CostSensitiveClassifier {
    pub fn new(cpe: Arc<dyn ClassProbability>, loss: Matrix) -> Result<Self> {
        let n = cpe.n_classes();
        if loss.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "loss matrix must be {n}x{n}, got {}x{}",
                loss.rows(),
                loss.cols()
            )));
        }
        Ok(CostSensitiveClassifier { cpe, loss })
    }

    /// The argmax (0-1 loss) classifier.
    pub fn argmax(cpe: Arc<dyn ClassProbability>) -> Self {
        let n = cpe.n_classes();
        let loss = zero_one_loss(n);
        CostSensitiveClassifier { cpe, loss }
    }

    pub fn loss(&self) -> &Matrix {
        &self.loss
    }

    pub fn cpe(&self) -> &Arc<dyn ClassProbability> {
        &self.cpe
    }

    pub fn n_classes(&self) -> usize {
        self.loss.rows()
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let p = self.cpe.predict_proba(x)?;
        Ok(DecisionRule::new(&self.loss).decide(&p))
    }

    pub fn empirical_confusion(&self, sample: &Dataset) -> Result<ConfusionMatrix> {
        let probs = self.cpe.predict_proba_rows(sample.features())?;
        confusion_from_probs(&probs, sample.labels(), &self.loss)
    }
}

/// `𝟙𝟙ᵀ - I`.
pub fn zero_one_loss(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// Column-major copy of a loss matrix so each candidate's cost is a
/// contiguous dot product.
pub(crate) struct DecisionRule {
    n: usize,
    columns: Vec<f64>,
}

impl DecisionRule {
    pub(crate) fn new(loss: &Matrix) -> Self {
        DecisionRule {
            n: loss.cols(),
            columns: loss.transpose().as_slice().to_vec(),
        }
    }

    /// Ties go to the smallest class index.
    #[inline]
    pub(crate) fn decide(&self, p: &[f64]) -> usize {
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (y, col) in self.columns.chunks_exact(self.n).enumerate() {
            let cost: f64 = col.iter().zip(p).map(|(l, q)| l * q).sum();
            if cost < best_cost {
                best_cost = cost;
                best = y;
            }
        }
        best
    }
}

/// Confusion of the cost-sensitive rule `loss` on precomputed class
/// probabilities (`probs` is m×n, one row per example).
pub(crate) fn confusion_from_probs(probs: &Matrix, labels: &[usize], loss: &Matrix) -> Result<ConfusionMatrix> {
    let counts = confusion_counts(probs, labels, loss)?;
    counts_to_confusion(&counts, loss.rows(), labels.len())
}

pub(crate) fn confusion_counts(probs: &Matrix, labels: &[usize], loss: &Matrix) -> Result<Vec<u64>> {
    let n = loss.rows();
    if labels.is_empty() {
        return Err(Error::EmptySample);
    }
    if probs.rows() != labels.len() || probs.cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows of width {} for {} labels and {n} classes",
            probs.rows(),
            probs.cols(),
            labels.len()
        )));
    }
    let rule = DecisionRule::new(loss);
    let mut counts = vec![0u64; n * n];
    for (i, &y) in labels.iter().enumerate() {
        let k = rule.decide(probs.row(i));
        counts[y * n + k] += 1;
    }
    Ok(counts)
}

fn counts_to_confusion(counts: &[u64], n: usize, m: usize) -> Result<ConfusionMatrix> {
    let m = m as f64;
    ConfusionMatrix::new(Matrix::new(n, n, counts.iter().map(|&c| c as f64 / m).collect())?)
}

/// Convex combination of deterministic cost-sensitive classifiers.
#[derive(Clone, Debug)]
pub struct RandomizedClassifier {
    components: Vec<(f64, CostSensitiveClassifier)>,
}

impl RandomizedClassifier {
    pub fn new(components: Vec<(f64, CostSensitiveClassifier)>) -> Result<Self> {
        if components.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, expected 1")));
        }
        let components: Vec<_> = components.into_iter().filter(|(w, _)| *w >= MIN_COMPONENT_WEIGHT).collect();
        let Some((_, first)) = components.first() else {
            return Err(Error::Config("mixture has no component with positive weight".into()));
        };
        let n = first.n_classes();
        if components.iter().any(|(_, c)| c.n_classes() != n) {
            return Err(Error::ShapeMismatch("mixture components disagree on class count".into()));
        }
        Ok(RandomizedClassifier { components })
    }

    pub fn deterministic(c: CostSensitiveClassifier) -> Self {
        RandomizedClassifier { components: vec![(1.0, c)] }
    }

    pub fn components(&self) -> &[(f64, CostSensitiveClassifier)] {
        &self.components
    }

    pub fn n_classes(&self) -> usize {
        self.components[0].1.n_classes()
    }

    /// Distribution over predicted labels at `x`.
    pub fn predict_distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_classes()];
        for (w, c) in &self.components {
            out[c.classify(x)?] += w;
        }
        Ok(out)
    }

    /// Draws one component by weight and applies it.
    pub fn sample_predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<usize> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (w, c) in &self.components {
            acc += w;
            if u < acc {
                return c.classify(x);
            }
        }
        self.components.last().expect("non-empty mixture").1.classify(x)
    }

    /// `Σₖ wₖ · Ĉ[hₖ]`, evaluated exactly rather than by sampling.
    pub fn expected_confusion(&self, sample: &Dataset) -> Result<ConfusionMatrix> {
        let mut out = self.expected_confusions(sample.features(), &[sample.labels()])?;
        Ok(out.remove(0))
    }

    /// Expected confusions of the same inputs under several labelings
    /// (e.g. clean and noisy labels), sharing the predictions.
    pub fn expected_confusions(&self, features: &Matrix, labelings: &[&[usize]]) -> Result<Vec<ConfusionMatrix>> {
        let n = self.n_classes();
        let m = features.rows();
        if m == 0 {
            return Err(Error::EmptySample);
        }
        for labels in labelings {
            if labels.len() != m {
                return Err(Error::ShapeMismatch(format!("{} labels for {m} rows", labels.len())));
            }
            if let Some(&y) = labels.iter().find(|&&y| y >= n) {
                return Err(Error::ShapeMismatch(format!("label {y} out of range for {n} classes")));
            }
        }
        // components usually share one estimator; compute its table once
        let mut tables: Vec<(*const (), Matrix)> = Vec::new();
        let mut acc = vec![Matrix::zeros(n, n); labelings.len()];
        let mut counts = vec![0u64; n * n];
        for (w, c) in &self.components {
            let key = Arc::as_ptr(c.cpe()) as *const ();
            let idx = match tables.iter().position(|(k, _)| *k == key) {
                Some(i) => i,
                None => {
                    tables.push((key, c.cpe().predict_proba_rows(features)?));
                    tables.len() - 1
                }
            };
            let probs = &tables[idx].1;
            let rule = DecisionRule::new(c.loss());
            let predicted: Vec<usize> = (0..m).map(|i| rule.decide(probs.row(i))).collect();
            for (labels, total) in labelings.iter().zip(acc.iter_mut()) {
                counts.iter_mut().for_each(|v| *v = 0);
                for (&y, &k) in labels.iter().zip(&predicted) {
                    counts[y * n + k] += 1;
                }
                let conf = counts_to_confusion(&counts, n, m)?;
                *total = total.add(&conf.matrix().scale(*w))?;
            }
        }
        acc.into_iter().map(ConfusionMatrix::new).collect()
    }
}
