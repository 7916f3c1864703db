//! Noise-corrected bisection for ratio-of-linear measures.
//!
//! Bisection over the optimal value γ ∈ [0, 1]: each step builds the
//! corrected loss `(Tᵀ)⁻¹(A - γB)`, solves the cost-sensitive problem, and
//! checks whether the resulting classifier reaches `ψ(T⁻¹Γ) ≤ γ`.

use std::sync::Arc;

use rand::Rng;

use crate::confusion::{confusion_from_probs, zero_one_loss, ClassProbability, CostSensitiveClassifier};
use crate::cpe::{self, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::measures::{micro_f1_parts, ratio_value};
use crate::ncfw::with_noise_classes;
use crate::noise::NoiseModel;
use crate::numerics::Matrix;

pub const DEFAULT_STEPS: usize = 200;

/// Bisection interval `[α, α + 2⁻ᵗ]` after `t` steps.
///
/// `α` is kept as its binary expansion (digit `s` has weight `2⁻ˢ`), so the
/// width stays exactly `2⁻ᵗ` even after the interval is narrower than the
/// f64 spacing around `α`. Rejecting a midpoint appends a 1, accepting it a 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DyadicInterval {
    digits: Vec<bool>,
}

impl DyadicInterval {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn depth(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[bool] {
        &self.digits
    }

    /// `2⁻ᵗ`; exact in f64 for any depth below 1075.
    pub fn width(&self) -> f64 {
        0.5f64.powi(self.depth() as i32)
    }

    pub fn lower(&self) -> f64 {
        self.sum_with(None)
    }

    pub fn upper(&self) -> f64 {
        self.sum_with(Some(self.depth()))
    }

    pub fn midpoint(&self) -> f64 {
        self.sum_with(Some(self.depth() + 1))
    }

    fn take_lower_half(&mut self) {
        self.digits.push(false);
    }

    fn take_upper_half(&mut self) {
        self.digits.push(true);
    }

    /// f64 value of `α + 2⁻ᵏ`, accumulated from the smallest weight up.
    fn sum_with(&self, extra_digit: Option<usize>) -> f64 {
        let mut total = extra_digit.map_or(0.0, |k| 0.5f64.powi(k as i32));
        for (s, &d) in self.digits.iter().enumerate().rev() {
            if d {
                total += 0.5f64.powi(s as i32 + 1);
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BsStep {
    pub step: usize,
    /// f64 rounding of the midpoint of the previous interval.
    pub gamma: f64,
    pub accepted: bool,
    /// `ψ(T⁻¹Γᵗ)` of the step's candidate classifier.
    pub corrected_value: f64,
    /// f64 roundings of the interval ends after the step.
    pub lower: f64,
    pub upper: f64,
    /// Exact interval width after the step.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BsTrace {
    pub steps: Vec<BsStep>,
    pub interval: DyadicInterval,
}

impl BsTrace {
    pub fn final_upper(&self) -> f64 {
        self.interval.upper()
    }
}

pub(crate) struct BsRun {
    /// Loss of the returned classifier (the plug-in loss when no step was
    /// accepted).
    pub(crate) final_loss: Matrix,
    pub(crate) trace: BsTrace,
}

pub(crate) fn bisection(a: &Matrix, b: &Matrix, noise: &NoiseModel, probs: &Matrix, labels: &[usize], steps: usize) -> Result<BsRun> {
    let n = noise.n();
    if a.shape() != (n, n) || b.shape() != (n, n) || probs.cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "A is {:?}, B is {:?}, estimator has {} classes, noise model {n}",
            a.shape(),
            b.shape(),
            probs.cols()
        )));
    }
    if steps < 1 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let mut interval = DyadicInterval::unit();
    let mut current = noise.correct_loss(&zero_one_loss(n))?;
    let mut trace = Vec::with_capacity(steps);
    for t in 1..=steps {
        let gamma = interval.midpoint();
        let loss = noise.correct_loss(&a.sub(&b.scale(gamma))?)?;
        let noisy_conf = confusion_from_probs(probs, labels, &loss)?;
        let corrected = noise.correct_confusion(&noisy_conf)?;
        let value = ratio_value(a, b, corrected.matrix(), Some(t))?;
        let accepted = value <= gamma;
        if accepted {
            interval.take_lower_half();
            current = loss;
        } else {
            interval.take_upper_half();
        }
        trace.push(BsStep {
            step: t,
            gamma,
            accepted,
            corrected_value: value,
            lower: interval.lower(),
            upper: interval.upper(),
            width: interval.width(),
        });
    }
    Ok(BsRun {
        final_loss: current,
        trace: BsTrace { steps: trace, interval },
    })
}

/// Learns a deterministic classifier for `ψ(C) = ⟨A,C⟩/⟨B,C⟩` from a noisy
/// sample.
pub fn run_ncbs<R: Rng + ?Sized>(
    a: &Matrix,
    b: &Matrix,
    noisy_sample: &Dataset,
    noise: &NoiseModel,
    steps: usize,
    cpe_cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(CostSensitiveClassifier, BsTrace)> {
    let (s1, s2) = with_noise_classes(noisy_sample, noise)?.split_halves()?;
    let model: Arc<dyn ClassProbability> = Arc::new(cpe::train(&s1, cpe_cfg, rng)?);
    run_with_estimator(a, b, model, &s2, noise, steps)
}

/// The bisection stage alone, for a given estimator and confusion sample.
pub fn run_with_estimator(
    a: &Matrix,
    b: &Matrix,
    estimator: Arc<dyn ClassProbability>,
    confusion_sample: &Dataset,
    noise: &NoiseModel,
    steps: usize,
) -> Result<(CostSensitiveClassifier, BsTrace)> {
    let probs = estimator.predict_proba_rows(confusion_sample.features())?;
    let run = bisection(a, b, noise, &probs, confusion_sample.labels(), steps)?;
    Ok((CostSensitiveClassifier::new(estimator, run.final_loss)?, run.trace))
}

/// [`run_ncbs`] for the Micro F₁ loss, with `n` taken from the noise model.
pub fn micro_f1_run<R: Rng + ?Sized>(
    noisy_sample: &Dataset,
    noise: &NoiseModel,
    steps: usize,
    cpe_cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(CostSensitiveClassifier, BsTrace)> {
    let (a, b) = micro_f1_parts(noise.n())?;
    run_ncbs(&a, &b, noisy_sample, noise, steps, cpe_cfg, rng)
}
