//! Noise-corrected Frank-Wolfe for monotonic convex measures.
//!
//! The iterate `Cᵗ` is kept on the noisy confusion scale (a convex
//! combination of empirical confusions on the held-out half). The measure
//! is only ever evaluated and differentiated at the corrected point
//! `T⁻¹Cᵗ`, and each linear step solves a cost-sensitive problem with the
//! corrected loss `(Tᵀ)⁻¹ ∇ψ(T⁻¹Cᵗ⁻¹)`. With `T = I` this is the plain
//! Frank-Wolfe method.

use std::sync::Arc;

use rand::Rng;

use crate::confusion::{confusion_from_probs, zero_one_loss, ClassProbability, CostSensitiveClassifier, RandomizedClassifier};
use crate::cpe::{self, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::measures::{ConfusionMatrix, MeasureSpec};
use crate::noise::NoiseModel;
use crate::numerics::Matrix;

pub const DEFAULT_STEPS: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct FwStep {
    pub step: usize,
    /// Corrected loss `(Tᵀ)⁻¹∇ψ(T⁻¹Cᵗ⁻¹)` defining `ĝᵗ`.
    pub loss: Matrix,
    /// `ψ(T⁻¹Cᵗ)` after the update.
    pub corrected_value: f64,
    /// Mixing weight `2/(t+1)` given to `ĝᵗ`.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwTrace {
    /// `ψ(T⁻¹C⁰)` for the initial plug-in classifier.
    pub initial_value: f64,
    pub steps: Vec<FwStep>,
    /// Final iterate `Cᵀ`, on the noisy confusion scale.
    pub final_confusion: ConfusionMatrix,
}

impl FwTrace {
    pub fn final_value(&self) -> f64 {
        self.steps.last().map(|s| s.corrected_value).unwrap_or(self.initial_value)
    }
}

/// Result of the solver loop on precomputed probabilities.
pub(crate) struct FwRun {
    /// Loss matrices of `h⁰, ĝ¹, …, ĝᵀ`.
    pub(crate) losses: Vec<Matrix>,
    pub(crate) trace: FwTrace,
}

/// Mixture weights of `h⁰, ĝ¹, …, ĝᵀ` in `hᵀ`, built by replaying the
/// update `hᵗ = (1 - 2/(t+1))hᵗ⁻¹ + (2/(t+1))ĝᵗ`.
pub fn fw_weights(steps: usize) -> Vec<f64> {
    let mut weights = Vec::with_capacity(steps + 1);
    weights.push(1.0);
    for t in 1..=steps {
        let gamma = 2.0 / (t as f64 + 1.0);
        weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
        weights.push(gamma);
    }
    weights
}

/// Frank-Wolfe on a fixed table of class probabilities (`probs`, m×n) for
/// the held-out examples with labels `labels`.
pub(crate) fn frank_wolfe(measure: &MeasureSpec, noise: &NoiseModel, probs: &Matrix, labels: &[usize], steps: usize) -> Result<FwRun> {
    let n = noise.n();
    if !measure.is_monotonic_convex() {
        return Err(Error::UnsupportedMeasure(
            measure.name().to_string(),
            "Frank-Wolfe needs a monotonic convex measure (hmean, qmean, gmean)".into(),
        ));
    }
    if measure.n() != n || probs.cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "measure has {} classes, noise model {n}, estimator {}",
            measure.n(),
            probs.cols()
        )));
    }
    if steps < 1 {
        return Err(Error::Config("steps must be at least 1".into()));
    }

    let plug_in = noise.correct_loss(&zero_one_loss(n))?;
    let mut current = confusion_from_probs(probs, labels, &plug_in)?;
    let initial_value = measure.evaluate_corrected(noise, &current)?;
    let mut losses = Vec::with_capacity(steps + 1);
    losses.push(plug_in);
    let mut trace = Vec::with_capacity(steps);

    for t in 1..=steps {
        let grad = measure.gradient(&noise.correct_confusion(&current)?)?;
        let loss = noise.correct_loss(&grad)?;
        let gamma_conf = confusion_from_probs(probs, labels, &loss)?;
        let weight = 2.0 / (t as f64 + 1.0);
        current = ConfusionMatrix::new(current.matrix().lerp(gamma_conf.matrix(), weight)?)?;
        let corrected_value = measure.evaluate_corrected(noise, &current)?;
        trace.push(FwStep {
            step: t,
            loss: loss.clone(),
            corrected_value,
            weight,
        });
        losses.push(loss);
    }

    Ok(FwRun {
        losses,
        trace: FwTrace {
            initial_value,
            steps: trace,
            final_confusion: current,
        },
    })
}

/// Wraps the per-step loss matrices into the output mixture `hᵀ`.
pub(crate) fn mixture_from_losses(cpe: Arc<dyn ClassProbability>, losses: Vec<Matrix>) -> Result<RandomizedClassifier> {
    let weights = fw_weights(losses.len() - 1);
    let components = weights
        .into_iter()
        .zip(losses)
        .map(|(w, loss)| Ok((w, CostSensitiveClassifier::new(cpe.clone(), loss)?)))
        .collect::<Result<Vec<_>>>()?;
    RandomizedClassifier::new(components)
}

/// Learns a randomized classifier for `measure` from a noisy sample.
///
/// The sample is split into halves; the first trains the class-probability
/// estimator, the second estimates confusions.
pub fn run_ncfw<R: Rng + ?Sized>(
    measure: &MeasureSpec,
    noisy_sample: &Dataset,
    noise: &NoiseModel,
    steps: usize,
    cpe_cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(RandomizedClassifier, FwTrace)> {
    let (s1, s2) = with_noise_classes(noisy_sample, noise)?.split_halves()?;
    let model: Arc<dyn ClassProbability> = Arc::new(cpe::train(&s1, cpe_cfg, rng)?);
    run_with_estimator(measure, model, &s2, noise, steps)
}

/// The Frank-Wolfe stage alone, for a given estimator and confusion sample.
pub fn run_with_estimator(
    measure: &MeasureSpec,
    estimator: Arc<dyn ClassProbability>,
    confusion_sample: &Dataset,
    noise: &NoiseModel,
    steps: usize,
) -> Result<(RandomizedClassifier, FwTrace)> {
    let probs = estimator.predict_proba_rows(confusion_sample.features())?;
    let run = frank_wolfe(measure, noise, &probs, confusion_sample.labels(), steps)?;
    let h = mixture_from_losses(estimator, run.losses)?;
    Ok((h, run.trace))
}

/// The sample relabelled to the noise model's class count.
pub(crate) fn with_noise_classes(sample: &Dataset, noise: &NoiseModel) -> Result<Dataset> {
    if sample.n_classes() > noise.n() {
        return Err(Error::ShapeMismatch(format!(
            "sample has {} classes but the noise model has {}",
            sample.n_classes(),
            noise.n()
        )));
    }
    sample.clone().with_n_classes(noise.n())
}
