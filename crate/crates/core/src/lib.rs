//! Learning non-decomposable multiclass performance measures from labels
//! corrupted by class-conditional noise.
//!
//! The noise channel is a known column-stochastic matrix `T` with
//! `T[i][j] = P(noisy label i | clean label j)`. Both solvers work on the
//! noisy sample and correct the two primitive steps they rely on:
//! cost-sensitive classification (loss `(Tᵀ)⁻¹L`) and confusion estimation
//! (`T⁻¹C̃`).
//!
//! - [`ncfw::run_ncfw`]: Frank-Wolfe for H-mean, Q-mean and G-mean losses.
//! - [`ncbs::run_ncbs`]: bisection for ratio-of-linear losses such as Micro F₁.
//! - [`baselines`]: noise-corrected logistic regression.
//! - [`harness`]: the experiment runner behind the `nclabel` binary.

pub mod baselines;
pub mod confusion;
pub mod cpe;
pub mod data;
pub mod error;
pub mod harness;
pub mod measures;
pub mod ncbs;
pub mod ncfw;
pub mod noise;
pub mod numerics;

pub use confusion::{ClassProbability, CostSensitiveClassifier, RandomizedClassifier};
pub use cpe::{CpeModel, TrainConfig};
pub use data::{Dataset, SyntheticSpec};
pub use error::{Error, Result};
pub use measures::{ConfusionMatrix, MeasureName, MeasureSpec};
pub use noise::{NoiseModel, NoiseScheme};
pub use numerics::Matrix;
