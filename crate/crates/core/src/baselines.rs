//! Noise-corrected logistic regression baselines.
//!
//! The uncorrected Frank-Wolfe and bisection baselines are the solvers run
//! with [`NoiseModel::identity`]; there is no separate code path for them.

use std::sync::Arc;

use rand::Rng;

use crate::confusion::{zero_one_loss, ClassProbability, CostSensitiveClassifier};
use crate::cpe::{self, ExampleLoss, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ncfw::with_noise_classes;
use crate::noise::NoiseModel;

/// Predicts `argmax T⁻¹η̂̃(x)`, ties going to the smallest index.
pub fn plugin_classifier(cpe: Arc<dyn ClassProbability>, noise: &NoiseModel) -> Result<CostSensitiveClassifier> {
    if cpe.n_classes() != noise.n() {
        return Err(Error::ShapeMismatch(format!(
            "estimator has {} classes, noise model {}",
            cpe.n_classes(),
            noise.n()
        )));
    }
    CostSensitiveClassifier::new(cpe, noise.correct_loss(&zero_one_loss(noise.n()))?)
}

/// Trains a CPE on the noisy sample and wraps it in the plug-in rule.
pub fn train_plugin<R: Rng + ?Sized>(noisy_sample: &Dataset, noise: &NoiseModel, cfg: &TrainConfig, rng: &mut R) -> Result<CostSensitiveClassifier> {
    let sample = with_noise_classes(noisy_sample, noise)?;
    let model = cpe::train(&sample, cfg, rng)?;
    plugin_classifier(Arc::new(model), noise)
}

/// Logistic regression trained with the backward-corrected cross-entropy.
pub fn train_backward_lr<R: Rng + ?Sized>(noisy_sample: &Dataset, noise: &NoiseModel, cfg: &TrainConfig, rng: &mut R) -> Result<CostSensitiveClassifier> {
    let sample = with_noise_classes(noisy_sample, noise)?;
    let (model, _) = cpe::fit(&sample, cfg, ExampleLoss::Backward(noise), rng)?;
    Ok(CostSensitiveClassifier::argmax(Arc::new(model)))
}

/// Logistic regression trained with cross-entropy on `T·softmax(Wx + b)`.
pub fn train_forward_lr<R: Rng + ?Sized>(noisy_sample: &Dataset, noise: &NoiseModel, cfg: &TrainConfig, rng: &mut R) -> Result<CostSensitiveClassifier> {
    let sample = with_noise_classes(noisy_sample, noise)?;
    let (model, _) = cpe::fit(&sample, cfg, ExampleLoss::Forward(noise), rng)?;
    Ok(CostSensitiveClassifier::argmax(Arc::new(model)))
}
