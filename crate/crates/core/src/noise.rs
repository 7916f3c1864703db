//! Class-conditional noise (CCN).
//!
//! `T[i][j] = P(noisy label = i | clean label = j)`, so every column of `T`
//! is a distribution. A clean confusion `C` becomes `T·C` under the
//! channel, and a loss matrix `L` is corrected to `(Tᵀ)⁻¹·L`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::ConfusionMatrix;
use crate::numerics::Matrix;

const STOCHASTIC_TOLERANCE: f64 = 1e-6;
const MAX_REDRAWS: usize = 1000;

/// Column-stochastic noise matrix with its cached inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    t: Matrix,
    t_inv: Matrix,
    t_inv_transpose: Matrix,
    one_norm_of_inv: f64,
}

/// How a noise matrix is generated from a noise level σ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseScheme {
    /// Diagonal `1 - σ`, off-diagonal `σ/(n-1)`.
    Uniform,
    /// Diagonal `1 - σ`, random off-diagonal mass summing to σ per column.
    RandomColumn,
}

impl NoiseScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseScheme::Uniform => "uniform",
            NoiseScheme::RandomColumn => "random-column",
        }
    }
}

impl std::str::FromStr for NoiseScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseScheme::Uniform),
            "random-column" => Ok(NoiseScheme::RandomColumn),
            other => Err(Error::Config(format!(
                "unknown noise scheme `{other}` (expected uniform or random-column)"
            ))),
        }
    }
}

impl NoiseModel {
    pub fn build(t: Matrix) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::NotColumnStochastic(format!(
                "noise matrix must be square, got {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        for (idx, &v) in t.as_slice().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::NotColumnStochastic(format!(
                    "entry ({}, {}) = {v} is outside [0, 1]",
                    idx / t.cols(),
                    idx % t.cols()
                )));
            }
        }
        for (j, s) in t.col_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::NotColumnStochastic(format!("column {j} sums to {s}")));
            }
        }
        let t_inv = t.invert()?;
        let one_norm_of_inv = t_inv.induced_one_norm();
        Ok(NoiseModel {
            t_inv_transpose: t_inv.transpose(),
            t,
            t_inv,
            one_norm_of_inv,
        })
    }

    pub fn identity(n: usize) -> Self {
        NoiseModel::build(Matrix::identity(n)).expect("identity is a valid noise matrix")
    }

    /// Symmetric channel: diagonal `1 - σ`, off-diagonal `σ/(n-1)`.
    pub fn uniform(n: usize, sigma: f64) -> Result<Self> {
        let bound = (n as f64 - 1.0) / n as f64;
        if n < 2 || !(0.0..bound).contains(&sigma) {
            return Err(Error::InvalidSigma {
                sigma,
                n,
                bound: "n >= 2 and 0 <= sigma < (n-1)/n".into(),
            });
        }
        let off = sigma / (n as f64 - 1.0);
        NoiseModel::build(Matrix::from_fn(n, n, |i, j| if i == j { 1.0 - sigma } else { off }))
    }

    /// Per column: diagonal `1 - σ`, the remaining σ split across the
    /// off-diagonal entries in proportion to independent U(0,1) draws.
    /// Singular draws are rejected and redrawn.
    pub fn random_column<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        if n < 2 || !(0.0..1.0).contains(&sigma) {
            return Err(Error::InvalidSigma {
                sigma,
                n,
                bound: "n >= 2 and 0 <= sigma < 1".into(),
            });
        }
        let mut last_err = None;
        for _ in 0..MAX_REDRAWS {
            let mut t = Matrix::zeros(n, n);
            for j in 0..n {
                let raw: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                let mut draws = raw.into_iter();
                for i in 0..n {
                    t[(i, j)] = if i == j {
                        1.0 - sigma
                    } else {
                        let u = draws.next().expect("n-1 draws per column");
                        if total > 0.0 {
                            sigma * u / total
                        } else {
                            sigma / (n as f64 - 1.0)
                        }
                    };
                }
            }
            match NoiseModel::build(t) {
                Ok(model) => return Ok(model),
                Err(e @ Error::SingularMatrix { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one draw"))
    }

    pub fn from_scheme<R: Rng + ?Sized>(scheme: NoiseScheme, n: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        match scheme {
            NoiseScheme::Uniform => NoiseModel::uniform(n, sigma),
            NoiseScheme::RandomColumn => NoiseModel::random_column(n, sigma, rng),
        }
    }

    pub fn n(&self) -> usize {
        self.t.rows()
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn t_inv(&self) -> &Matrix {
        &self.t_inv
    }

    /// ‖T⁻¹‖₁, the induced 1-norm of the inverse.
    pub fn one_norm_of_inv(&self) -> f64 {
        self.one_norm_of_inv
    }

    pub fn is_identity(&self) -> bool {
        self.t == Matrix::identity(self.n())
    }

    /// Draws a noisy label for every clean label from column `y` of `T`.
    pub fn flip_labels<R: Rng + ?Sized>(&self, labels: &[usize], rng: &mut R) -> Vec<usize> {
        let n = self.n();
        labels
            .iter()
            .map(|&y| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for i in 0..n {
                    acc += self.t[(i, y)];
                    if u < acc {
                        return i;
                    }
                }
                // u landed in the rounding gap above the last cumulative sum
                (0..n).rev().find(|&i| self.t[(i, y)] > 0.0).unwrap_or(y)
            })
            .collect()
    }

    /// `(Tᵀ)⁻¹·L`: a loss whose noisy-label risk equals the clean risk of `L`.
    pub fn correct_loss(&self, loss: &Matrix) -> Result<Matrix> {
        self.t_inv_transpose.matmul(loss)
    }

    /// `T⁻¹·p̃`. The result sums to 1 but may leave the simplex.
    pub fn correct_probs(&self, p_noisy: &[f64]) -> Result<Vec<f64>> {
        self.t_inv.matvec(p_noisy)
    }

    /// `T⁻¹·C̃`, an estimate of the clean confusion from a noisy one.
    pub fn correct_confusion(&self, c_noisy: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        ConfusionMatrix::new(self.t_inv.matmul(c_noisy.matrix())?)
    }

    /// `T·C`, the noisy confusion induced by a clean one.
    pub fn push_confusion(&self, c_clean: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        ConfusionMatrix::new(self.t.matmul(c_clean.matrix())?)
    }

    /// `‖T̂⁻¹ - T⁻¹‖₁` between an estimated model and this one.
    pub fn inverse_gap(&self, estimate: &NoiseModel) -> Result<f64> {
        Ok(estimate.t_inv.sub(&self.t_inv)?.induced_one_norm())
    }
}
