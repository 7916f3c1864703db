//! Performance measures as functions of confusion matrices.
//!
//! Two families are supported. Monotonic convex measures (H-mean, Q-mean,
//! G-mean losses) are evaluated and differentiated through the per-class
//! recalls `rᵢ = Cᵢᵢ / Σⱼ Cᵢⱼ`. Ratio-of-linear measures are stored as the
//! pair `(A, B)` with `ψ(C) = ⟨A, C⟩ / ⟨B, C⟩`; Micro F₁ is the built-in
//! instance.
//!
//! All values are in loss form: 0 is perfect.

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::Matrix;

/// Lower clamp for recall denominators and recall ratios.
pub const RECALL_EPS: f64 = 1e-8;

/// `C[i][j]` is the probability mass of (true class i, predicted class j).
///
/// Empirical confusions are entrywise in `[0, 1]` with unit mass. Corrected
/// confusions (`T⁻¹·Ĉ`) keep unit mass but may have negative entries, so
/// the constructor only checks shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix(Matrix);

impl ConfusionMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "confusion matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(ConfusionMatrix(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        ConfusionMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    /// Entries in `[0, 1]` and total mass 1 within `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.0.as_slice().iter().all(|&v| (-tol..=1.0 + tol).contains(&v))
            && (self.total() - 1.0).abs() <= tol
    }
}

impl Index<(usize, usize)> for ConfusionMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MonotonicMeasure {
    HMean,
    QMean,
    GMean,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    MonotonicConvex(MonotonicMeasure),
    RatioOfLinear { a: Matrix, b: Matrix },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSpec {
    name: String,
    n: usize,
    kind: MeasureKind,
}

/// Measure names accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasureName {
    HMean,
    QMean,
    GMean,
    MicroF1,
}

impl MeasureName {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureName::HMean => "hmean",
            MeasureName::QMean => "qmean",
            MeasureName::GMean => "gmean",
            MeasureName::MicroF1 => "microf1",
        }
    }
}

impl fmt::Display for MeasureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmean" => Ok(MeasureName::HMean),
            "qmean" => Ok(MeasureName::QMean),
            "gmean" => Ok(MeasureName::GMean),
            "microf1" => Ok(MeasureName::MicroF1),
            other => Err(Error::Config(format!(
                "unknown measure `{other}` (expected hmean, qmean, gmean or microf1)"
            ))),
        }
    }
}

impl MeasureSpec {
    pub fn monotonic(measure: MonotonicMeasure, n: usize) -> Self {
        let name = match measure {
            MonotonicMeasure::HMean => "hmean",
            MonotonicMeasure::QMean => "qmean",
            MonotonicMeasure::GMean => "gmean",
        };
        MeasureSpec {
            name: name.to_string(),
            n,
            kind: MeasureKind::MonotonicConvex(measure),
        }
    }

    pub fn hmean(n: usize) -> Self {
        Self::monotonic(MonotonicMeasure::HMean, n)
    }

    pub fn qmean(n: usize) -> Self {
        Self::monotonic(MonotonicMeasure::QMean, n)
    }

    pub fn gmean(n: usize) -> Self {
        Self::monotonic(MonotonicMeasure::GMean, n)
    }

    pub fn micro_f1(n: usize) -> Result<Self> {
        let (a, b) = micro_f1_parts(n)?;
        Self::ratio_of_linear("microf1", a, b)
    }

    pub fn ratio_of_linear(name: impl Into<String>, a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() {
            return Err(Error::ShapeMismatch(format!(
                "ratio-of-linear parts must be square and equal-sized, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok(MeasureSpec {
            name: name.into(),
            n: a.rows(),
            kind: MeasureKind::RatioOfLinear { a, b },
        })
    }

    pub fn from_name(name: MeasureName, n: usize) -> Result<Self> {
        Ok(match name {
            MeasureName::HMean => Self::hmean(n),
            MeasureName::QMean => Self::qmean(n),
            MeasureName::GMean => Self::gmean(n),
            MeasureName::MicroF1 => Self::micro_f1(n)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_monotonic_convex(&self) -> bool {
        matches!(self.kind, MeasureKind::MonotonicConvex(_))
    }

    pub fn linear_parts(&self) -> Option<(&Matrix, &Matrix)> {
        match &self.kind {
            MeasureKind::RatioOfLinear { a, b } => Some((a, b)),
            MeasureKind::MonotonicConvex(_) => None,
        }
    }

    fn check_n(&self, c: &ConfusionMatrix) -> Result<()> {
        if c.n() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "measure `{}` is defined for {} classes, confusion has {}",
                self.name,
                self.n,
                c.n()
            )));
        }
        Ok(())
    }

    /// Loss-form value ψ(C).
    pub fn evaluate(&self, c: &ConfusionMatrix) -> Result<f64> {
        self.check_n(c)?;
        match &self.kind {
            MeasureKind::MonotonicConvex(m) => {
                let recalls = ClampedRecalls::of(c);
                Ok(monotonic_value(*m, &recalls.ratio))
            }
            MeasureKind::RatioOfLinear { a, b } => ratio_value(a, b, c.matrix(), None),
        }
    }

    /// ∂ψ/∂C for the monotonic convex family, evaluated at the ε-clamped
    /// point. The Q-mean gradient at ψ = 0 is the zero subgradient.
    pub fn gradient(&self, c: &ConfusionMatrix) -> Result<Matrix> {
        self.check_n(c)?;
        let measure = match &self.kind {
            MeasureKind::MonotonicConvex(m) => *m,
            MeasureKind::RatioOfLinear { .. } => {
                return Err(Error::UnsupportedMeasure(
                    self.name.clone(),
                    "gradients are only defined for monotonic convex measures".into(),
                ))
            }
        };
        let n = self.n;
        let recalls = ClampedRecalls::of(c);
        let r = &recalls.ratio;
        let d_psi_d_r: Vec<f64> = match measure {
            MonotonicMeasure::HMean => {
                let s: f64 = r.iter().map(|ri| 1.0 / ri).sum();
                r.iter().map(|ri| -(n as f64) / (s * s * ri * ri)).collect()
            }
            MonotonicMeasure::QMean => {
                let psi = monotonic_value(measure, r);
                if psi == 0.0 {
                    return Ok(Matrix::zeros(n, n));
                }
                r.iter().map(|ri| -(1.0 - ri) / (n as f64 * psi)).collect()
            }
            MonotonicMeasure::GMean => {
                let g = geometric_mean(r);
                r.iter().map(|ri| -g / (n as f64 * ri)).collect()
            }
        };
        // rᵢ = Cᵢᵢ / Rᵢ: ∂rᵢ/∂Cᵢᵢ = (1 - rᵢ)/Rᵢ, ∂rᵢ/∂Cᵢⱼ = -rᵢ/Rᵢ (j ≠ i)
        let mut grad = Matrix::zeros(n, n);
        for i in 0..n {
            let ri = r[i];
            let denom = recalls.row_mass[i];
            for j in 0..n {
                let dr = if i == j { (1.0 - ri) / denom } else { -ri / denom };
                grad[(i, j)] = d_psi_d_r[i] * dr;
            }
        }
        Ok(grad)
    }

    /// ψ̃(C̃) = ψ(T⁻¹·C̃), the measure seen through the noise channel.
    pub fn evaluate_corrected(&self, noise: &NoiseModel, c_noisy: &ConfusionMatrix) -> Result<f64> {
        self.check_n(c_noisy)?;
        match &self.kind {
            MeasureKind::MonotonicConvex(_) => self.evaluate(&noise.correct_confusion(c_noisy)?),
            MeasureKind::RatioOfLinear { a, b } => {
                let a_corr = noise.correct_loss(a)?;
                let b_corr = noise.correct_loss(b)?;
                ratio_value(&a_corr, &b_corr, c_noisy.matrix(), None)
            }
        }
    }
}

pub(crate) fn ratio_value(a: &Matrix, b: &Matrix, c: &Matrix, step: Option<usize>) -> Result<f64> {
    let den = b.inner(c)?;
    if den <= 0.0 {
        return Err(Error::NonPositiveDenominator { value: den, step });
    }
    Ok(a.inner(c)? / den)
}

struct ClampedRecalls {
    row_mass: Vec<f64>,
    ratio: Vec<f64>,
}

impl ClampedRecalls {
    fn of(c: &ConfusionMatrix) -> Self {
        let row_mass: Vec<f64> = c.matrix().row_sums().into_iter().map(|r| r.max(RECALL_EPS)).collect();
        let ratio = row_mass
            .iter()
            .enumerate()
            .map(|(i, r)| (c[(i, i)] / r).clamp(RECALL_EPS, 1.0))
            .collect();
        ClampedRecalls { row_mass, ratio }
    }
}

fn geometric_mean(r: &[f64]) -> f64 {
    let log_sum: f64 = r.iter().map(|v| v.ln()).sum();
    (log_sum / r.len() as f64).exp()
}

fn monotonic_value(m: MonotonicMeasure, r: &[f64]) -> f64 {
    let n = r.len() as f64;
    match m {
        MonotonicMeasure::HMean => 1.0 - n / r.iter().map(|v| 1.0 / v).sum::<f64>(),
        MonotonicMeasure::QMean => (r.iter().map(|v| (1.0 - v).powi(2)).sum::<f64>() / n).sqrt(),
        MonotonicMeasure::GMean => 1.0 - geometric_mean(r),
    }
}

/// Linear parts of the Micro F₁ loss with class 1 (index 0) as the
/// "negative" class.
///
/// `B[i][j] = 2 - [i = 0] - [j = 0]` rewrites the constant 2 as `2·ΣC`, and
/// `A = B - 2·diag(0, 1, …, 1)`, so `⟨A, C⟩/⟨B, C⟩` matches
/// `1 - 2Σᵢ₌₂ Cᵢᵢ / (2 - Σᵢ C₁ᵢ - Σᵢ Cᵢ₁)` whenever C has unit mass.
pub fn micro_f1_parts(n: usize) -> Result<(Matrix, Matrix)> {
    if n < 2 {
        return Err(Error::Config(format!("Micro F1 needs at least 2 classes, got {n}")));
    }
    let b = Matrix::from_fn(n, n, |i, j| 2.0 - f64::from(i == 0) - f64::from(j == 0));
    let a = Matrix::from_fn(n, n, |i, j| b[(i, j)] - if i == j && i > 0 { 2.0 } else { 0.0 });
    Ok((a, b))
}
