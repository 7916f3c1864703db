//! Class-probability estimation with L2-regularised multiclass logistic
//! regression, trained by full-batch gradient descent with backtracking.
//!
//! The per-example loss is pluggable so the noise-corrected logistic
//! regression baselines share the optimiser: plain cross-entropy, the
//! backward-corrected loss, and the forward (pushed-through-T) loss.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::confusion::ClassProbability;
use crate::data::{softmax, Dataset};
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::Matrix;

/// λ grid searched when cross-validation is enabled.
pub const CV_LAMBDA_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    /// Initial step size; halved on every rejected trial step.
    pub learning_rate: f64,
    /// When set, λ is chosen from [`CV_LAMBDA_GRID`] by k-fold
    /// cross-validation and `l2_lambda` is ignored.
    pub cv_folds: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-4,
            max_iters: 2000,
            grad_tolerance: 1e-6,
            learning_rate: 1.0,
            cv_folds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::Config("grad_tolerance must be positive".into()));
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::Config("l2_lambda must be a finite non-negative number".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if matches!(self.cv_folds, Some(k) if k < 2) {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Per-example training loss as a function of the logits `z = Wx + b`.
#[derive(Clone, Copy, Debug)]
pub enum ExampleLoss<'a> {
    /// `-log softmax(z)_ỹ`.
    CrossEntropy,
    /// `[(Tᵀ)⁻¹ ℓ]_ỹ` with `ℓ_c = -log softmax(z)_c`; unbiased for the clean
    /// cross-entropy under the channel.
    Backward(&'a NoiseModel),
    /// `-log (T·softmax(z))_ỹ`.
    Forward(&'a NoiseModel),
}

impl ExampleLoss<'_> {
    /// Adds this example's loss to the return value and its logit gradient
    /// into `grad`. `p` is `softmax(z)` and `log_p` its logarithm.
    fn accumulate(&self, p: &[f64], log_p: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        match self {
            ExampleLoss::CrossEntropy => {
                for (g, pc) in grad.iter_mut().zip(p) {
                    *g = *pc;
                }
                grad[label] -= 1.0;
                -log_p[label]
            }
            ExampleLoss::Backward(noise) => {
                // coefficients a = row ỹ of (Tᵀ)⁻¹ = column ỹ of T⁻¹; Σa = 1
                let t_inv = noise.t_inv();
                let mut loss = 0.0;
                for c in 0..p.len() {
                    let a = t_inv[(c, label)];
                    loss += a * -log_p[c];
                    grad[c] = p[c] - a;
                }
                loss
            }
            ExampleLoss::Forward(noise) => {
                // log p̃_ỹ = logsumexp_c(log T[ỹ][c] + log p_c); terms staged in grad
                let t = noise.t();
                let mut max = f64::NEG_INFINITY;
                for c in 0..p.len() {
                    grad[c] = t[(label, c)].ln() + log_p[c];
                    max = max.max(grad[c]);
                }
                let log_pt = max + grad.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                // ∂/∂z_c = p_c - T[ỹ][c]·p_c / p̃_ỹ
                for c in 0..p.len() {
                    grad[c] = p[c] - (grad[c] - log_pt).exp();
                }
                -log_pt
            }
        }
    }
}

/// Linear softmax model over z-scored features.
#[derive(Clone, Debug, PartialEq)]
pub struct CpeModel {
    weights: Matrix,
    biases: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

/// Optimiser diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    /// Objective after initialisation and after every accepted step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub l2_lambda: f64,
}

impl CpeModel {
    pub fn new(weights: Matrix, biases: Vec<f64>, feature_means: Vec<f64>, feature_stds: Vec<f64>) -> Result<Self> {
        let (n, d) = weights.shape();
        if biases.len() != n || feature_means.len() != d || feature_stds.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "weights {n}x{d} need {n} biases and {d} means/stds"
            )));
        }
        if feature_stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("feature standard deviations must be positive".into()));
        }
        Ok(CpeModel {
            weights,
            biases,
            feature_means,
            feature_stds,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &[f64] {
        &self.feature_stds
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let n = self.biases.len();
        let d = self.feature_means.len();
        let mut z = self.biases.clone();
        for j in 0..d {
            let xj = (x[j] - self.feature_means[j]) / self.feature_stds[j];
            for (c, zc) in z.iter_mut().enumerate().take(n) {
                *zc += self.weights[(c, j)] * xj;
            }
        }
        z
    }
}

impl ClassProbability for CpeModel {
    fn n_classes(&self) -> usize {
        self.biases.len()
    }

    fn dim(&self) -> usize {
        self.feature_means.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(softmax(&self.logits(x)))
    }
}

/// Plain logistic regression (cross-entropy on the given labels).
pub fn train<R: Rng + ?Sized>(sample: &Dataset, cfg: &TrainConfig, rng: &mut R) -> Result<CpeModel> {
    fit(sample, cfg, ExampleLoss::CrossEntropy, rng).map(|(m, _)| m)
}

/// Trains with an arbitrary per-example loss; runs λ cross-validation first
/// when `cfg.cv_folds` is set.
pub fn fit<R: Rng + ?Sized>(sample: &Dataset, cfg: &TrainConfig, loss: ExampleLoss<'_>, rng: &mut R) -> Result<(CpeModel, TrainSummary)> {
    cfg.validate()?;
    let lambda = match cfg.cv_folds {
        Some(k) => select_lambda(sample, cfg, loss, k, rng)?,
        None => cfg.l2_lambda,
    };
    fit_fixed(sample, &TrainConfig { l2_lambda: lambda, ..cfg.clone() }, loss)
}

/// k-fold cross-validation of λ over [`CV_LAMBDA_GRID`], scored by the
/// held-out value of the same per-example loss.
pub fn select_lambda<R: Rng + ?Sized>(sample: &Dataset, cfg: &TrainConfig, loss: ExampleLoss<'_>, folds: usize, rng: &mut R) -> Result<f64> {
    let m = sample.len();
    if folds < 2 || folds > m {
        return Err(Error::Config(format!("cannot run {folds}-fold cross-validation on {m} examples")));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let mut best = (f64::INFINITY, cfg.l2_lambda);
    for &lambda in &CV_LAMBDA_GRID {
        let fold_cfg = TrainConfig { l2_lambda: lambda, cv_folds: None, ..cfg.clone() };
        let mut held_out = 0.0;
        for f in 0..folds {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = idx.iter().enumerate().fold((vec![], vec![]), |mut acc, (pos, &i)| {
                if pos % folds == f {
                    acc.0.push(i)
                } else {
                    acc.1.push(i)
                }
                acc
            });
            let train = sample.subset(&train_idx)?;
            let test = sample.subset(&test_idx)?;
            let (model, _) = fit_fixed(&train, &fold_cfg, loss)?;
            let table = Standardized::with_stats(&test, model.feature_means.clone(), model.feature_stds.clone());
            let theta = Params::from_model(&model);
            held_out += table.objective(&theta, 0.0, loss, None) * test.len() as f64;
        }
        if held_out < best.0 {
            best = (held_out, lambda);
        }
    }
    Ok(best.1)
}

fn fit_fixed(sample: &Dataset, cfg: &TrainConfig, loss: ExampleLoss<'_>) -> Result<(CpeModel, TrainSummary)> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_noise_shape(&loss, sample.n_classes())?;
    let table = Standardized::fit(sample);
    let n = sample.n_classes();
    let d = sample.dim();
    let lambda = cfg.l2_lambda;

    let mut theta = Params::zeros(n, d);
    let mut grad = Params::zeros(n, d);
    let mut f = table.objective(&theta, lambda, loss, Some(&mut grad));
    let mut history = vec![f];
    let mut step = cfg.learning_rate;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_grad = Params::zeros(n, d);

    while iterations < cfg.max_iters {
        let g_inf = grad.max_abs();
        if g_inf < cfg.grad_tolerance {
            converged = true;
            break;
        }
        let dir = grad.preconditioned(lambda);
        let slope = grad.dot(&dir);
        let mut accepted = false;
        while step >= MIN_STEP {
            let trial = theta.axpy(-step, &dir);
            let f_trial = table.objective(&trial, lambda, loss, Some(&mut trial_grad));
            if f_trial.is_finite() && f_trial <= f - ARMIJO_C * step * slope {
                theta = trial;
                f = f_trial;
                std::mem::swap(&mut grad, &mut trial_grad);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(f);
        iterations += 1;
        step *= 2.0;
    }
    if !converged && grad.max_abs() < cfg.grad_tolerance {
        converged = true;
    }

    let model = CpeModel {
        weights: Matrix::new(n, d, theta.w)?,
        biases: theta.b,
        feature_means: table.means,
        feature_stds: table.stds,
    };
    Ok((
        model,
        TrainSummary {
            objective_history: history,
            iterations,
            converged,
            l2_lambda: lambda,
        },
    ))
}

fn check_noise_shape(loss: &ExampleLoss<'_>, n: usize) -> Result<()> {
    match loss {
        ExampleLoss::CrossEntropy => Ok(()),
        ExampleLoss::Backward(t) | ExampleLoss::Forward(t) if t.n() == n => Ok(()),
        ExampleLoss::Backward(t) | ExampleLoss::Forward(t) => Err(Error::ShapeMismatch(format!(
            "noise model has {} classes, sample has {n}",
            t.n()
        ))),
    }
}

/// Flat parameter vector: `W` row-major (n×d), then `b`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Params {
    n: usize,
    d: usize,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl Params {
    pub(crate) fn zeros(n: usize, d: usize) -> Self {
        Params { n, d, w: vec![0.0; n * d], b: vec![0.0; n] }
    }

    fn from_model(model: &CpeModel) -> Self {
        let (n, d) = model.weights.shape();
        Params { n, d, w: model.weights.as_slice().to_vec(), b: model.biases.clone() }
    }

    fn axpy(&self, alpha: f64, dir: &Params) -> Params {
        Params {
            n: self.n,
            d: self.d,
            w: self.w.iter().zip(&dir.w).map(|(a, b)| a + alpha * b).collect(),
            b: self.b.iter().zip(&dir.b).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.w.iter().chain(&self.b).map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn dot(&self, other: &Params) -> f64 {
        self.w.iter().chain(&self.b).zip(other.w.iter().chain(&other.b)).map(|(a, b)| a * b).sum()
    }

    /// Divides by a diagonal curvature bound: softmax curvature is at most
    /// 1/4 per logit and features are z-scored, so weights get `1/4 + 2λ`
    /// and biases `1/4`.
    fn preconditioned(&self, lambda: f64) -> Params {
        let hw = 0.25 + 2.0 * lambda;
        Params {
            n: self.n,
            d: self.d,
            w: self.w.iter().map(|g| g / hw).collect(),
            b: self.b.iter().map(|g| g / 0.25).collect(),
        }
    }
}

/// Training features after z-scoring.
pub(crate) struct Standardized<'a> {
    sample: &'a Dataset,
    x: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl<'a> Standardized<'a> {
    /// Zero-variance features keep a unit scale.
    pub(crate) fn fit(sample: &'a Dataset) -> Self {
        let m = sample.len() as f64;
        let d = sample.dim();
        let mut means = vec![0.0; d];
        for i in 0..sample.len() {
            for (mu, v) in means.iter_mut().zip(sample.features().row(i)) {
                *mu += v;
            }
        }
        means.iter_mut().for_each(|mu| *mu /= m);
        let mut vars = vec![0.0; d];
        for i in 0..sample.len() {
            for ((s, v), mu) in vars.iter_mut().zip(sample.features().row(i)).zip(&means) {
                *s += (v - mu) * (v - mu);
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| {
                let sd = (s / m).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self::with_stats(sample, means, stds)
    }

    fn with_stats(sample: &'a Dataset, means: Vec<f64>, stds: Vec<f64>) -> Self {
        let d = sample.dim();
        let mut x = Vec::with_capacity(sample.len() * d);
        for i in 0..sample.len() {
            for ((v, mu), sd) in sample.features().row(i).iter().zip(&means).zip(&stds) {
                x.push((v - mu) / sd);
            }
        }
        Standardized { sample, x, means, stds }
    }

    /// `(1/m) Σ loss_i + λ‖W‖²`, with its gradient written into `grad`
    /// when requested.
    pub(crate) fn objective(&self, theta: &Params, lambda: f64, loss: ExampleLoss<'_>, mut grad: Option<&mut Params>) -> f64 {
        let (n, d) = (theta.n, theta.d);
        let m = self.sample.len();
        if let Some(g) = grad.as_deref_mut() {
            g.w.iter_mut().for_each(|v| *v = 0.0);
            g.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut z = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut log_p = vec![0.0; n];
        let mut dz = vec![0.0; n];
        let mut total = 0.0;
        for (i, &label) in self.sample.labels().iter().enumerate() {
            let xi = &self.x[i * d..(i + 1) * d];
            for c in 0..n {
                let wc = &theta.w[c * d..(c + 1) * d];
                z[c] = theta.b[c] + wc.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..n {
                p[c] = (z[c] - max).exp();
                sum += p[c];
            }
            let lse = max + sum.ln();
            for c in 0..n {
                p[c] /= sum;
                log_p[c] = z[c] - lse;
            }
            total += loss.accumulate(&p, &log_p, label, &mut dz);
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..n {
                    g.b[c] += dz[c];
                    let gw = &mut g.w[c * d..(c + 1) * d];
                    for (gv, xv) in gw.iter_mut().zip(xi) {
                        *gv += dz[c] * xv;
                    }
                }
            }
        }
        let inv_m = 1.0 / m as f64;
        let reg: f64 = theta.w.iter().map(|v| v * v).sum();
        if let Some(g) = grad {
            for (gv, wv) in g.w.iter_mut().zip(&theta.w) {
                *gv = *gv * inv_m + 2.0 * lambda * wv;
            }
            g.b.iter_mut().for_each(|v| *v *= inv_m);
        }
        total * inv_m + lambda * reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_clusters() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..200 {
            let y = i % 2;
            xs.push(if y == 0 { -3.0 } else { 3.0 } + rng.gen_range(-1.0..1.0));
            ys.push(y);
        }
        Dataset::new(Matrix::new(200, 1, xs).unwrap(), ys, 2).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn separable_clusters_are_fit_exactly() {
        let ds = two_clusters();
        let cfg = TrainConfig { l2_lambda: 1e-4, ..TrainConfig::default() };
        let (model, summary) = fit(&ds, &cfg, ExampleLoss::CrossEntropy, &mut rng()).unwrap();
        assert!(summary.objective_history.windows(2).all(|w| w[1] < w[0]));
        let correct = (0..ds.len())
            .filter(|&i| {
                let p = model.predict_proba(ds.features().row(i)).unwrap();
                let k = if p[1] > p[0] { 1 } else { 0 };
                k == ds.labels()[i]
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn heavy_regularisation_predicts_the_prior() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let ds = SyntheticSpec::default().generate(2000, &mut r).unwrap();
        let cfg = TrainConfig { l2_lambda: 1e6, ..TrainConfig::default() };
        let model = train(&ds, &cfg, &mut rng()).unwrap();
        assert!(model.weights().vec_norm(crate::numerics::VecNorm::Inf) < 1e-3);
        let p = model.predict_proba(ds.features().row(0)).unwrap();
        for k in 0..3 {
            let prior = ds.labels().iter().filter(|&&y| y == k).count() as f64 / ds.len() as f64;
            assert!((p[k] - prior).abs() < 1e-3, "class {k}: {} vs {prior}", p[k]);
        }
    }

    fn finite_difference_check(loss: ExampleLoss<'_>) {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let ds = SyntheticSpec::default().generate(300, &mut r).unwrap();
        let table = Standardized::fit(&ds);
        for _ in 0..5 {
            let mut theta = Params::zeros(3, 2);
            theta.w.iter_mut().chain(theta.b.iter_mut()).for_each(|v| *v = r.gen_range(-1.0..1.0));
            let mut grad = Params::zeros(3, 2);
            table.objective(&theta, 0.01, loss, Some(&mut grad));
            let analytic: Vec<f64> = grad.w.iter().chain(&grad.b).cloned().collect();
            let h = 1e-6;
            let k_total = analytic.len();
            let scale = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
            for k in 0..k_total {
                let bump = |delta: f64| {
                    let mut t = theta.clone();
                    if k < 6 {
                        t.w[k] += delta
                    } else {
                        t.b[k - 6] += delta
                    }
                    table.objective(&t, 0.01, loss, None)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((numeric - analytic[k]).abs() / scale < 1e-5, "param {k}: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        finite_difference_check(ExampleLoss::CrossEntropy);
    }

    #[test]
    fn backward_gradient_matches_finite_differences() {
        let noise = NoiseModel::random_column(3, 0.3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        finite_difference_check(ExampleLoss::Backward(&noise));
    }

    #[test]
    fn forward_gradient_matches_finite_differences() {
        let noise = NoiseModel::random_column(3, 0.3, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        finite_difference_check(ExampleLoss::Forward(&noise));
    }

    #[test]
    fn objective_is_convex_along_segments() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let ds = SyntheticSpec::default().generate(300, &mut r).unwrap();
        let table = Standardized::fit(&ds);
        for _ in 0..50 {
            let draw = |r: &mut ChaCha8Rng| {
                let mut t = Params::zeros(3, 2);
                t.w.iter_mut().chain(t.b.iter_mut()).for_each(|v| *v = r.gen_range(-3.0..3.0));
                t
            };
            let a = draw(&mut r);
            let b = draw(&mut r);
            let mid = a.axpy(1.0, &b);
            let mid = Params { w: mid.w.iter().map(|v| v / 2.0).collect(), b: mid.b.iter().map(|v| v / 2.0).collect(), ..mid };
            let f = |t: &Params| table.objective(t, 1e-3, ExampleLoss::CrossEntropy, None);
            assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-10);
        }
    }

    #[test]
    fn zero_model_predicts_uniform_and_bias_shift_is_invisible() {
        let model = CpeModel::new(Matrix::zeros(4, 2), vec![0.0; 4], vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(model.predict_proba(&[3.0, -1.0]).unwrap(), vec![0.25; 4]);

        let w = Matrix::from_rows(&[[0.3, -1.2], [2.0, 0.1], [-0.7, 0.4]]).unwrap();
        let base = CpeModel::new(w.clone(), vec![0.1, -0.2, 0.5], vec![0.5, -1.0], vec![2.0, 0.5]).unwrap();
        let shifted = CpeModel::new(w, vec![7.1, 6.8, 7.5], vec![0.5, -1.0], vec![2.0, 0.5]).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = [r.gen_range(-100.0..100.0), r.gen_range(-100.0..100.0)];
            let p = base.predict_proba(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|v| *v >= 0.0));
            let q = shifted.predict_proba(&x).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(matches!(base.predict_proba(&[1.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_variance_features_pass_through() {
        let feats = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]).unwrap();
        let ds = Dataset::new(feats, vec![0, 0, 1, 1], 2).unwrap();
        let model = train(&ds, &TrainConfig::default(), &mut rng()).unwrap();
        assert_eq!(model.feature_stds()[1], 1.0);
        assert_eq!(model.feature_means()[1], 5.0);
    }

    #[test]
    fn identity_noise_corrections_reduce_to_plain_regression() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let ds = SyntheticSpec::default().generate(500, &mut r).unwrap();
        let cfg = TrainConfig { max_iters: 300, ..TrainConfig::default() };
        let id = NoiseModel::identity(3);
        let (plain, _) = fit(&ds, &cfg, ExampleLoss::CrossEntropy, &mut rng()).unwrap();
        let (back, _) = fit(&ds, &cfg, ExampleLoss::Backward(&id), &mut rng()).unwrap();
        let (fwd, _) = fit(&ds, &cfg, ExampleLoss::Forward(&id), &mut rng()).unwrap();
        assert_eq!(plain, back);
        assert_eq!(plain, fwd);
    }

    #[test]
    fn cross_validation_picks_from_grid() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let ds = SyntheticSpec::default().generate(400, &mut r).unwrap();
        let cfg = TrainConfig { cv_folds: Some(3), max_iters: 200, ..TrainConfig::default() };
        let (_, summary) = fit(&ds, &cfg, ExampleLoss::CrossEntropy, &mut rng()).unwrap();
        assert!(CV_LAMBDA_GRID.contains(&summary.l2_lambda));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { max_iters: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { grad_tolerance: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { cv_folds: Some(1), ..TrainConfig::default() }.validate().is_err());
        let ds = two_clusters();
        let wrong = NoiseModel::identity(3);
        assert!(fit(&ds, &TrainConfig::default(), ExampleLoss::Backward(&wrong), &mut rng()).is_err());
    }

    #[test]
    fn estimates_improve_with_sample_size() {
        let spec = SyntheticSpec::default();
        let mut r = ChaCha8Rng::seed_from_u64(10);
        let test = spec.generate(5000, &mut r).unwrap();
        let mut errors = Vec::new();
        for m in [100, 1000, 10_000] {
            let ds = spec.generate(m, &mut r).unwrap();
            let model = train(&ds, &TrainConfig::default(), &mut rng()).unwrap();
            let mut err = 0.0;
            for i in 0..test.len() {
                let x = test.features().row(i);
                let p = model.predict_proba(x).unwrap();
                err += p.iter().zip(spec.true_eta(x)).map(|(a, b)| (a - b).abs()).sum::<f64>();
            }
            errors.push(err / test.len() as f64);
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }
}
